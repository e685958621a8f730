//! Engine-level behavior across executors: submission semantics, records,
//! transformer plumbing, and shutdown.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;
use tapsb::engine::{Engine, EngineError, TaskInput, TaskSpawner, WaitError};
use tapsb::executor::{ExecutorSpec, SerialExecutor};
use tapsb::record::{verify_records, MemorySink, TaskStatus};
use tapsb::transform::StoreService;
use tapsb::{FilterSpec, TaskError, TransformerSpec, Value};

fn worker_pool_spec(workers: usize) -> ExecutorSpec {
    ExecutorSpec::WorkerPool {
        workers,
        worker_program: Some(PathBuf::from(env!("CARGO_BIN_EXE_tapsb"))),
        drain_timeout_s: 60.0,
    }
}

fn engine_with_sink(executor: ExecutorSpec, seed: u64) -> (Engine, Arc<MemorySink>) {
    let sink = Arc::new(MemorySink::new());
    let engine = Engine::builder()
        .executor(executor.build().unwrap())
        .sink(sink.clone())
        .seed(seed)
        .build()
        .unwrap();
    (engine, sink)
}

#[test]
fn identity_round_trip_on_every_executor() {
    for spec in [
        ExecutorSpec::Serial,
        ExecutorSpec::ThreadPool { workers: 2 },
        worker_pool_spec(2),
        ExecutorSpec::LatencySim {
            sched_latency_s: 0.005,
            batch_size: 8,
            control_bandwidth: None,
            inner: Box::new(ExecutorSpec::ThreadPool { workers: 2 }),
        },
    ] {
        let (engine, sink) = engine_with_sink(spec.clone(), 3);
        let future = engine.submit("identity", vec![TaskInput::int(17)]).unwrap();
        assert_eq!(future.result(None).unwrap(), Value::Int(17));
        engine.shutdown(true);
        assert_eq!(sink.len(), 1, "one record per task on {}", spec.kind_name());
        let record = &sink.snapshot()[0];
        assert_eq!(record.executor, spec.kind_name());
        assert_eq!(record.status, TaskStatus::Succeeded);
    }
}

#[test]
fn futures_become_dependencies_and_parents_are_recorded() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::Serial, 1);
    let f1 = engine.submit("const_5", vec![]).unwrap();
    let f2 = engine.submit("add1", vec![TaskInput::future(&f1)]).unwrap();
    assert_eq!(f2.result(None).unwrap(), Value::Int(6));
    engine.shutdown(true);
    let records = sink.snapshot();
    let child = records.iter().find(|r| r.function == "add1").unwrap();
    assert_eq!(child.parents, vec![f1.task_id().to_string()]);
    verify_records(&records, 10_000).unwrap();
}

#[test]
fn map_preserves_order_and_emits_all_records() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::ThreadPool { workers: 4 }, 1);
    let inputs: Vec<Vec<TaskInput>> = (0..10).map(|i| vec![TaskInput::int(i)]).collect();
    let futures = engine.map("identity", inputs).unwrap();
    let results: Vec<Value> = futures.iter().map(|f| f.result(None).unwrap()).collect();
    assert_eq!(results, (0..10).map(Value::Int).collect::<Vec<_>>());
    assert!(engine.map("identity", vec![]).unwrap().is_empty());
    engine.shutdown(true);
    assert_eq!(sink.len(), 10);
}

#[test]
fn unknown_function_and_shutdown_are_lifecycle_errors() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::Serial, 1);
    assert!(matches!(
        engine.submit("nope", vec![]),
        Err(EngineError::UnknownFunction(name)) if name == "nope"
    ));
    engine.shutdown(true);
    engine.shutdown(true); // idempotent
    assert!(matches!(
        engine.submit("const_5", vec![]),
        Err(EngineError::ShutDown)
    ));
    assert_eq!(sink.len(), 0);
}

#[test]
fn result_timeout_leaves_state_pending() {
    let (engine, _sink) = engine_with_sink(ExecutorSpec::ThreadPool { workers: 1 }, 1);
    let slow = engine
        .submit(
            "sleep_noop",
            vec![
                TaskInput::bytes(vec![]),
                TaskInput::float(0.5),
                TaskInput::int(0),
            ],
        )
        .unwrap();
    match slow.result(Some(Duration::ZERO)) {
        Err(WaitError::Timeout) => {}
        other => panic!("expected timeout, got {other:?}"),
    }
    assert_eq!(slow.result(None).unwrap(), Value::Bytes(vec![]));
    engine.shutdown(true);
}

#[test]
fn failed_task_error_reaches_the_client() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::Serial, 1);
    let doomed = engine
        .submit("fail_app", vec![TaskInput::text("kaboom")])
        .unwrap();
    match doomed.result(None) {
        Err(WaitError::Task(TaskError::Application(message))) => assert_eq!(message, "kaboom"),
        other => panic!("unexpected {other:?}"),
    }
    engine.shutdown(true);
    let record = &sink.snapshot()[0];
    assert_eq!(record.status, TaskStatus::Failed);
    assert_eq!(record.error_kind, "application");
}

#[test]
fn min_size_filter_transforms_large_arguments_only() {
    let dir = tempfile::tempdir().unwrap();
    let spec = TransformerSpec::File {
        dir: dir.path().to_path_buf(),
    };
    let sink = Arc::new(MemorySink::new());
    let engine = Engine::builder()
        .executor(Arc::new(SerialExecutor::new()))
        .transformer(spec.build().unwrap(), spec)
        .filter(FilterSpec::MinSize { threshold: 100 })
        .sink(sink.clone())
        .seed(2)
        .build()
        .unwrap();

    let big = vec![7u8; 1 << 20];
    let future = engine
        .submit("identity", vec![TaskInput::bytes(big.clone())])
        .unwrap();
    assert_eq!(future.result(None).unwrap(), Value::Bytes(big));

    let small = engine
        .submit("identity", vec![TaskInput::bytes(vec![1, 2, 3])])
        .unwrap();
    assert_eq!(small.result(None).unwrap(), Value::Bytes(vec![1, 2, 3]));
    engine.shutdown(true);

    let records = sink.snapshot();
    let big_record = records.iter().find(|r| r.arg_bytes > 1 << 20).unwrap();
    assert!(
        big_record.transform_args_us > 0,
        "large argument was transformed"
    );
    assert!(
        big_record.resolve_args_us > 0,
        "worker resolved the argument"
    );
    assert!(
        big_record.transform_result_us > 0,
        "large result was transformed"
    );
    let small_record = records.iter().find(|r| r.arg_bytes < 100).unwrap();
    assert_eq!(small_record.transform_args_us, 0);
}

#[test]
fn transformed_results_resolve_transparently_across_processes() {
    let service = StoreService::bind("127.0.0.1:0").unwrap();
    let spec = TransformerSpec::Store {
        addr: service.addr().to_owned(),
    };
    let engine = Engine::builder()
        .executor(worker_pool_spec(2).build().unwrap())
        .transformer(spec.build().unwrap(), spec)
        .filter(FilterSpec::MinSize { threshold: 512 })
        .seed(2)
        .build()
        .unwrap();
    // Chain: parent produces 64 KiB (transformed), child consumes it as a
    // dependency, client resolves the child's transformed result.
    let parent = engine
        .submit(
            "sleep_noop",
            vec![
                TaskInput::bytes(vec![]),
                TaskInput::float(0.0),
                TaskInput::int(65_536),
            ],
        )
        .unwrap();
    let child = engine
        .submit("identity", vec![TaskInput::future(&parent)])
        .unwrap();
    let value = child.result(None).unwrap();
    assert_eq!(
        value,
        Value::Bytes(tapsb::apps::synthetic::sleep_noop(0.0, 65_536))
    );
    engine.shutdown(true);
}

#[test]
fn transform_failure_is_a_submission_error() {
    let service = StoreService::bind("127.0.0.1:0").unwrap();
    let addr = service.addr().to_owned();
    drop(service); // store is gone; transforms must fail
    let spec = TransformerSpec::Store { addr };
    let engine = Engine::builder()
        .executor(Arc::new(SerialExecutor::new()))
        .transformer(spec.build().unwrap(), spec)
        .filter(FilterSpec::Always)
        .seed(2)
        .build()
        .unwrap();
    match engine.submit("identity", vec![TaskInput::bytes(vec![0; 64])]) {
        Err(EngineError::Transform(_)) => {}
        other => panic!("expected transform error, got {other:?}"),
    }
    engine.shutdown(true);
}

#[test]
fn shutdown_with_wait_flushes_all_records() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::ThreadPool { workers: 4 }, 1);
    for i in 0..10 {
        engine
            .submit(
                "sleep_noop",
                vec![
                    TaskInput::bytes(vec![i as u8]),
                    TaskInput::float(0.05),
                    TaskInput::int(0),
                ],
            )
            .unwrap();
    }
    engine.shutdown(true);
    assert_eq!(
        sink.len(),
        10,
        "all in-flight tasks recorded before shutdown returned"
    );
}

#[test]
fn seq_arguments_track_each_future() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::ThreadPool { workers: 2 }, 1);
    let a = engine.submit("const_5", vec![]).unwrap();
    let b = engine.submit("add1", vec![TaskInput::int(9)]).unwrap();
    let child = engine
        .submit(
            "sum_ints",
            vec![TaskInput::Seq(vec![
                TaskInput::future(&a),
                TaskInput::future(&b),
                TaskInput::int(100),
            ])],
        )
        .unwrap();
    assert_eq!(child.result(None).unwrap(), Value::Int(115));
    engine.shutdown(true);
    let records = sink.snapshot();
    let child_record = records.iter().find(|r| r.function == "sum_ints").unwrap();
    let mut parents = child_record.parents.clone();
    parents.sort();
    let mut expected = vec![a.task_id().to_string(), b.task_id().to_string()];
    expected.sort();
    assert_eq!(parents, expected);
    verify_records(&records, 10_000).unwrap();
}

#[test]
fn deeply_nested_futures_pass_inline_as_task_id_text() {
    let (engine, _sink) = engine_with_sink(ExecutorSpec::Serial, 1);
    let parent = engine.submit("const_5", vec![]).unwrap();
    // Two levels down: beyond the detection horizon, by design.
    let child = engine
        .submit(
            "identity",
            vec![TaskInput::Seq(vec![TaskInput::Seq(vec![
                TaskInput::future(&parent),
            ])])],
        )
        .unwrap();
    let value = child.result(None).unwrap();
    assert_eq!(
        value,
        Value::List(vec![Value::List(vec![Value::Text(
            parent.task_id().to_string()
        )])])
    );
    engine.shutdown(true);
}

#[test]
fn dataflow_ordering_holds_across_executors() {
    for spec in [ExecutorSpec::ThreadPool { workers: 4 }, worker_pool_spec(2)] {
        let (engine, sink) = engine_with_sink(spec, 7);
        // Diamond: source -> 3 middles -> sink.
        let source = engine.submit("const_5", vec![]).unwrap();
        let middles: Vec<_> = (0..3)
            .map(|_| {
                engine
                    .submit("add1", vec![TaskInput::future(&source)])
                    .unwrap()
            })
            .collect();
        let sink_task = engine
            .submit(
                "sum_ints",
                vec![TaskInput::Seq(
                    middles.iter().map(TaskInput::future).collect(),
                )],
            )
            .unwrap();
        assert_eq!(sink_task.result(None).unwrap(), Value::Int(18));
        engine.shutdown(true);
        verify_records(&sink.snapshot(), 10_000).unwrap();
    }
}

#[test]
fn task_ids_are_deterministic_per_seed() {
    let (engine_a, _) = engine_with_sink(ExecutorSpec::Serial, 42);
    let (engine_b, _) = engine_with_sink(ExecutorSpec::Serial, 42);
    let (engine_c, _) = engine_with_sink(ExecutorSpec::Serial, 43);
    let a = engine_a.submit("const_5", vec![]).unwrap().task_id();
    let b = engine_b.submit("const_5", vec![]).unwrap().task_id();
    let c = engine_c.submit("const_5", vec![]).unwrap().task_id();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for engine in [engine_a, engine_b, engine_c] {
        engine.shutdown(false);
    }
}

#[test]
fn serial_equivalence_of_results() {
    // The same task graph yields the same multiset of results on every
    // executor kind.
    let mut all_results: Vec<Vec<Value>> = Vec::new();
    for spec in [
        ExecutorSpec::Serial,
        ExecutorSpec::ThreadPool { workers: 4 },
        worker_pool_spec(2),
    ] {
        let (engine, _) = engine_with_sink(spec, 5);
        let mut results = Vec::new();
        let futures: Vec<_> = (0..12)
            .map(|i| engine.submit("add1", vec![TaskInput::int(i)]).unwrap())
            .collect();
        for f in futures {
            results.push(f.result(None).unwrap());
        }
        engine.shutdown(true);
        all_results.push(results);
    }
    assert_eq!(all_results[0], all_results[1]);
    assert_eq!(all_results[0], all_results[2]);
}

#[test]
fn parent_fidelity_over_random_dags() {
    use tapsb::rng::SeededRng;
    // Property: for random DAG shapes, each record's parent set equals the
    // future-valued arguments passed at submission.
    let mut rng = SeededRng::new(99);
    for round in 0..5 {
        let (engine, sink) = engine_with_sink(ExecutorSpec::ThreadPool { workers: 4 }, round);
        let mut submitted: Vec<(tapsb::TaskId, Vec<String>)> = Vec::new();
        let mut futures = Vec::new();
        for i in 0..30usize {
            let parent_count = (rng.below(4)) as usize;
            let mut args = vec![TaskInput::int(i as i64)];
            let mut parent_ids = Vec::new();
            for _ in 0..parent_count.min(futures.len()) {
                let pick = rng.below(futures.len() as u64) as usize;
                let parent: &tapsb::engine::TaskFuture = &futures[pick];
                if !parent_ids.contains(&parent.task_id().to_string()) {
                    parent_ids.push(parent.task_id().to_string());
                }
                args.push(TaskInput::future(parent));
            }
            let f = engine.submit("sum_ints", args).unwrap();
            submitted.push((f.task_id(), parent_ids));
            futures.push(f);
        }
        engine.shutdown(true);
        let records = sink.snapshot();
        assert_eq!(records.len(), submitted.len());
        for (id, mut expected_parents) in submitted {
            let record = records
                .iter()
                .find(|r| r.task_id == id.to_string())
                .unwrap();
            let mut actual = record.parents.clone();
            actual.sort();
            expected_parents.sort();
            assert_eq!(actual, expected_parents);
        }
        verify_records(&records, 10_000).unwrap();
    }
}

#[test]
fn map_of_one_thousand_tasks_records_each() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::Serial, 1);
    let inputs: Vec<Vec<TaskInput>> = (0..1000)
        .map(|_| {
            vec![
                TaskInput::bytes(vec![]),
                TaskInput::float(0.0),
                TaskInput::int(0),
            ]
        })
        .collect();
    let futures = engine.map("sleep_noop", inputs).unwrap();
    assert_eq!(futures.len(), 1000);
    engine.shutdown(true);
    assert_eq!(sink.len(), 1000);
}

#[test]
fn transformed_results_round_trip_across_random_sizes() {
    // Any result past the filter threshold must come back to the client
    // byte-for-byte, transparently resolved.
    let service = StoreService::bind("127.0.0.1:0").unwrap();
    let spec = TransformerSpec::Store {
        addr: service.addr().to_owned(),
    };
    let engine = Engine::builder()
        .executor(ExecutorSpec::ThreadPool { workers: 2 }.build().unwrap())
        .transformer(spec.build().unwrap(), spec)
        .filter(FilterSpec::MinSize { threshold: 300 })
        .seed(8)
        .build()
        .unwrap();
    let mut rng = tapsb::rng::SeededRng::new(61);
    for _ in 0..50 {
        let size = rng.below(1 << 16) as usize;
        let payload = rng.bytes(size);
        let future = engine
            .submit("identity", vec![TaskInput::bytes(payload.clone())])
            .unwrap();
        assert_eq!(
            future.result(None).unwrap(),
            Value::Bytes(payload),
            "size {size}"
        );
    }
    engine.shutdown(true);
}

#[test]
fn two_pool_threads_run_concurrent_submissions() {
    let (engine, sink) = engine_with_sink(ExecutorSpec::ThreadPool { workers: 4 }, 1);
    let engine = Arc::new(engine);
    std::thread::scope(|scope| {
        for t in 0..4 {
            let engine = Arc::clone(&engine);
            scope.spawn(move || {
                for i in 0..25 {
                    let f = engine
                        .submit("add1", vec![TaskInput::int(t * 100 + i)])
                        .unwrap();
                    assert_eq!(f.result(None).unwrap(), Value::Int(t * 100 + i + 1));
                }
            });
        }
    });
    engine.shutdown(true);
    assert_eq!(sink.len(), 100);
}
