//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one pass/fail line. Criteria run sequentially inside a single
//! test so timing-sensitive measurements are not polluted by parallel
//! test threads.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tapsb::apps::cholesky::{
    expected_task_count, factor_hash, generate_input, reconstruction_error, run_cholesky,
    CholeskyConfig,
};
use tapsb::apps::failures::{FailureInjector, FailureSpec, FailureType};
use tapsb::apps::mapreduce::{self, CorpusMode, MapReduceConfig};
use tapsb::apps::synthetic::{Structure, SyntheticConfig};
use tapsb::apps::AppSpec;
use tapsb::engine::{Engine, TaskSpawner};
use tapsb::executor::{ExecutorSpec, WorkerPoolExecutor};
use tapsb::harness::bench::{
    bench_scaling, bench_transfer, transfer_median_of_runs, transfer_run_means, TransferOption,
};
use tapsb::harness::{execute_run, RunConfig};
use tapsb::record::{
    analytic_signature, dag_signature, load_records, utilization_bound, verify_records, JsonlSink,
    MemorySink, RecordSink, TaskRecord, TaskStatus,
};
use tapsb::rng::SeededRng;
use tapsb::transform::{StoreService, Transformer};
use tapsb::{FilterSpec, TransformerSpec, Value};

/// Cross-process clock-skew tolerance for record ordering checks, µs.
const SKEW_US: u64 = 10_000;

fn worker_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_tapsb"))
}

fn worker_pool_spec(workers: usize) -> ExecutorSpec {
    ExecutorSpec::WorkerPool {
        workers,
        worker_program: Some(worker_bin()),
        drain_timeout_s: 60.0,
    }
}

fn executor_kinds() -> Vec<(&'static str, ExecutorSpec)> {
    vec![
        ("serial", ExecutorSpec::Serial),
        ("thread-pool", ExecutorSpec::ThreadPool { workers: 4 }),
        ("worker-pool", worker_pool_spec(2)),
        (
            "latency-sim",
            ExecutorSpec::LatencySim {
                sched_latency_s: 0.001,
                batch_size: 64,
                control_bandwidth: None,
                inner: Box::new(ExecutorSpec::ThreadPool { workers: 4 }),
            },
        ),
    ]
}

fn engine_with_sink(executor: &ExecutorSpec, seed: u64) -> (Engine, Arc<MemorySink>) {
    let sink = Arc::new(MemorySink::new());
    let engine = Engine::builder()
        .executor(executor.build().expect("executor starts"))
        .sink(sink.clone())
        .seed(seed)
        .build()
        .expect("engine builds");
    (engine, sink)
}

fn check(condition: bool, message: impl Into<String>) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(message.into())
    }
}

// ---------------------------------------------------------------------------
// 1. Cholesky correctness across executors
// ---------------------------------------------------------------------------

fn criterion_1_cholesky_correctness() -> Result<(), String> {
    let started = Instant::now();
    let mut cases = Vec::new();
    for n in [64usize, 256, 512] {
        let mut blocks = vec![16usize, 64, n];
        blocks.dedup();
        blocks.sort_unstable();
        blocks.dedup();
        for b in blocks {
            for seed in [1u64, 2, 3] {
                cases.push((n, b, seed));
            }
        }
    }

    for &(n, b, seed) in &cases {
        let config = CholeskyConfig { n, block: b, seed };
        let mut factors = Vec::new();
        for (kind, spec) in executor_kinds() {
            let (engine, sink) = engine_with_sink(&spec, seed);
            let l = run_cholesky(&engine, &config)
                .map_err(|e| format!("cholesky n={n} b={b} seed={seed} on {kind}: {e}"))?;
            engine.shutdown(true);
            check(
                sink.len() as u64 == expected_task_count(config.tile_count()),
                format!("task count off for n={n} b={b} on {kind}"),
            )?;
            verify_records(&sink.snapshot(), SKEW_US)
                .map_err(|e| format!("records n={n} b={b} {kind}: {e}"))?;
            factors.push((kind, factor_hash(&l), l));
        }
        let reference_hash = &factors[0].1;
        for (kind, hash, _) in &factors {
            check(
                hash == reference_hash,
                format!("factor differs on {kind} for n={n} b={b} seed={seed}"),
            )?;
        }
        // Hashes agree, so one reconstruction check covers every executor.
        let a = generate_input(n, b, seed);
        let error = reconstruction_error(&factors[0].2, &a);
        check(
            error < 1e-9,
            format!("reconstruction error {error:.3e} >= 1e-9 for n={n} b={b} seed={seed}"),
        )?;
    }

    let elapsed = started.elapsed();
    check(
        elapsed < Duration::from_secs(60),
        format!("criterion took {elapsed:?}, budget is 60 s"),
    )
}

// ---------------------------------------------------------------------------
// 2. Cholesky DAG shape
// ---------------------------------------------------------------------------

/// Analytic dependency pattern of the right-looking tiled factorization,
/// built without consulting the implementation's submission bookkeeping.
fn cholesky_analytic_dag(t: usize) -> Vec<(String, Vec<usize>)> {
    let mut tasks: Vec<(String, Vec<usize>)> = Vec::new();
    let mut cell: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for k in 0..t {
        let potrf_parents = cell.get(&(k, k)).copied().into_iter().collect();
        tasks.push(("cholesky_potrf".to_owned(), potrf_parents));
        let potrf_idx = tasks.len() - 1;
        cell.insert((k, k), potrf_idx);

        let mut trsm_idx = BTreeMap::new();
        for i in k + 1..t {
            let mut parents = vec![potrf_idx];
            parents.extend(cell.get(&(i, k)).copied());
            tasks.push(("cholesky_trsm".to_owned(), parents));
            trsm_idx.insert(i, tasks.len() - 1);
            cell.insert((i, k), tasks.len() - 1);
        }
        for i in k + 1..t {
            let mut parents = vec![trsm_idx[&i]];
            parents.extend(cell.get(&(i, i)).copied());
            tasks.push(("cholesky_syrk".to_owned(), parents));
            cell.insert((i, i), tasks.len() - 1);
            for j in k + 1..i {
                let mut parents = vec![trsm_idx[&i], trsm_idx[&j]];
                parents.extend(cell.get(&(i, j)).copied());
                tasks.push(("cholesky_gemm".to_owned(), parents));
                cell.insert((i, j), tasks.len() - 1);
            }
        }
    }
    tasks
}

fn criterion_2_cholesky_dag_shape() -> Result<(), String> {
    for t in [1usize, 2, 4, 8] {
        let n = 16 * t;
        let spec = ExecutorSpec::ThreadPool { workers: 4 };
        let (engine, sink) = engine_with_sink(&spec, 3);
        run_cholesky(
            &engine,
            &CholeskyConfig {
                n,
                block: 16,
                seed: 5,
            },
        )
        .map_err(|e| format!("t={t}: {e}"))?;
        engine.shutdown(true);
        let records = sink.snapshot();

        let expected_count = expected_task_count(t);
        check(
            records.len() as u64 == expected_count,
            format!(
                "t={t}: {} tasks, formula says {expected_count}",
                records.len()
            ),
        )?;
        let expected = analytic_signature(&cholesky_analytic_dag(t));
        let actual = dag_signature(&records).map_err(|e| format!("t={t}: {e}"))?;
        check(
            actual == expected,
            format!("t={t}: record DAG differs from analytic pattern"),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 3. MapReduce oracle
// ---------------------------------------------------------------------------

fn criterion_3_mapreduce_oracle() -> Result<(), String> {
    let (docs, wpd, vocab, seed) = (10_000usize, 50usize, 500usize, 13u64);
    let corpus = mapreduce::generate_corpus(docs, wpd, vocab, seed);
    let oracle = mapreduce::format_top_n(&mapreduce::map_task(&corpus), 25);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for map_tasks in [1u64, 8, 32] {
        let spec = ExecutorSpec::ThreadPool { workers: 4 };
        let (engine, sink) = engine_with_sink(&spec, 2);
        let config = MapReduceConfig {
            corpus: CorpusMode::Generated {
                docs,
                words_per_doc: wpd,
                vocab_size: vocab,
                seed,
            },
            map_tasks,
            n_top: 25,
        };
        let out = mapreduce::run_mapreduce(&engine, &config, dir.path())
            .map_err(|e| format!("map_tasks={map_tasks}: {e}"))?;
        engine.shutdown(true);
        let produced = std::fs::read_to_string(out).map_err(|e| e.to_string())?;
        check(
            produced == oracle,
            format!("output differs from oracle at map_tasks={map_tasks}"),
        )?;
        check(
            sink.len() as u64 == map_tasks + 1,
            format!(
                "task count {} != {} at map_tasks={map_tasks}",
                sink.len(),
                map_tasks + 1
            ),
        )?;
        verify_records(&sink.snapshot(), SKEW_US)
            .map_err(|e| format!("map_tasks={map_tasks}: {e}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 4. Transformer round-trip and engine neutrality
// ---------------------------------------------------------------------------

fn criterion_4_transformer_round_trip() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let service = StoreService::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let file_spec = TransformerSpec::File {
        dir: dir.path().join("cache"),
    };
    let store_spec = TransformerSpec::Store {
        addr: service.addr().to_owned(),
    };
    let file_transformer = file_spec.build().map_err(|e| e.to_string())?;
    let store_transformer = store_spec.build().map_err(|e| e.to_string())?;

    let mut rng = SeededRng::new(44);
    const MAX: u64 = 16 << 20;
    for i in 0..1_000u32 {
        // Log-uniform sizes over (0, 16 MiB], plus pinned endpoints.
        let size = match i {
            0 => 0usize,
            1 => MAX as usize,
            _ => {
                let exponent = rng.uniform_f64() * 24.0;
                ((2f64.powf(exponent) as u64).min(MAX)) as usize
            }
        };
        let value = Value::Bytes(rng.bytes(size));
        let frame = value.encode();
        for (name, transformer) in [
            ("file", &file_transformer as &Arc<dyn Transformer>),
            ("store", &store_transformer),
        ] {
            let ident = transformer
                .transform(&value)
                .map_err(|e| format!("{name}: {e}"))?;
            check(
                ident.size == frame.len() as u64,
                format!("{name}: size field off at {size} B"),
            )?;
            let back = transformer
                .resolve(&ident)
                .map_err(|e| format!("{name}: {e}"))?;
            check(
                back.encode() == frame,
                format!("{name}: frame changed through round trip at {size} B"),
            )?;
            // Bound disk/memory growth across 1000 payloads.
            match &ident.scheme {
                tapsb::transform::Scheme::File => {
                    let _ = std::fs::remove_file(&ident.locator);
                }
                tapsb::transform::Scheme::Store => {
                    let key = u128::from_str_radix(&ident.locator, 16).unwrap();
                    let _ = tapsb::transform::StoreTransformer::new(service.addr())
                        .client()
                        .delete(key);
                }
            }
        }
    }

    // Engine neutrality: the cholesky factor hash is unchanged by any
    // transformer/filter combination.
    let config = CholeskyConfig {
        n: 256,
        block: 64,
        seed: 2,
    };
    let mut hashes = Vec::new();
    for (label, transformer, filter) in [
        ("none", None, FilterSpec::Never),
        (
            "file",
            Some(file_spec.clone()),
            FilterSpec::MinSize { threshold: 4096 },
        ),
        ("store", Some(store_spec.clone()), FilterSpec::Always),
    ] {
        let mut builder = Engine::builder()
            .executor(ExecutorSpec::ThreadPool { workers: 4 }.build().unwrap())
            .seed(9)
            .filter(filter);
        if let Some(spec) = transformer {
            builder = builder.transformer(spec.build().map_err(|e| e.to_string())?, spec);
        }
        let engine = builder.build().map_err(|e| e.to_string())?;
        let l = run_cholesky(&engine, &config).map_err(|e| format!("{label}: {e}"))?;
        engine.shutdown(true);
        hashes.push((label, factor_hash(&l)));
    }
    check(
        hashes.iter().all(|(_, h)| h == &hashes[0].1),
        format!("factor hash changed by transformer: {hashes:?}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Scaling bound
// ---------------------------------------------------------------------------

fn criterion_5_scaling_bound() -> Result<(), String> {
    let run_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sleep_s = 0.05;
    let asserted: Vec<(String, ExecutorSpec)> = [1usize, 2, 4, 8]
        .into_iter()
        .map(|w| {
            (
                format!("thread-pool-w{w}"),
                ExecutorSpec::ThreadPool { workers: w },
            )
        })
        .collect();
    let report = bench_scaling(&asserted, 1000, sleep_s, run_dir.path(), 1);
    for w in [1usize, 2, 4, 8] {
        let label = format!("thread-pool-w{w}");
        let measured = report
            .mean(&label, "throughput")
            .ok_or_else(|| format!("no throughput row for {label}"))?;
        let bound = w as f64 / sleep_s;
        let deviation = (measured - bound).abs() / bound;
        println!(
            "    scaling {label}: {measured:.2} tasks/s (bound {bound:.2}, deviation {:.1}%)",
            deviation * 100.0
        );
        check(
            deviation <= 0.15,
            format!(
                "{label}: {measured:.2} tasks/s deviates {:.1}% from {bound:.2}",
                deviation * 100.0
            ),
        )?;
    }

    // Per-executor no-op throughput: reported, not asserted.
    let reported: Vec<(String, ExecutorSpec)> = vec![
        ("serial-noop".to_owned(), ExecutorSpec::Serial),
        (
            "thread-pool-noop".to_owned(),
            ExecutorSpec::ThreadPool { workers: 2 },
        ),
        ("worker-pool-noop".to_owned(), worker_pool_spec(2)),
    ];
    let noop_report = bench_scaling(&reported, 1000, 0.0, run_dir.path(), 1);
    for (label, _) in &reported {
        if let Some(throughput) = noop_report.mean(label, "throughput") {
            println!("    no-op throughput {label}: {throughput:.0} tasks/s (reported only)");
        }
    }

    // Telemetry integrity on the benchmark runs themselves.
    for entry in std::fs::read_dir(run_dir.path()).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path().join("tasks.jsonl");
        if path.exists() {
            let records = load_records(&path).map_err(|e| e.to_string())?;
            verify_records(&records, SKEW_US).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 6. Transfer monotonicity and crossover
// ---------------------------------------------------------------------------

fn criterion_6_transfer() -> Result<(), String> {
    let sizes = [1_000usize, 10_000, 100_000, 1_000_000, 10_000_000];
    let run_dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    // Monotonicity on the worker-pool baseline: payloads travel inline
    // through the worker IPC stream. Worker count matches the host's
    // physical parallelism so scheduler jitter stays small next to the
    // per-task signal.
    let workers = std::thread::available_parallelism()
        .map(|p| p.get().min(32))
        .unwrap_or(2);
    let report = bench_transfer(
        &worker_pool_spec(workers),
        &sizes,
        &[
            TransferOption {
                label: "inline".to_owned(),
                transformer: None,
            },
            TransferOption {
                label: "file".to_owned(),
                transformer: Some(TransformerSpec::File {
                    dir: PathBuf::new(),
                }),
            },
            TransferOption {
                label: "store".to_owned(),
                transformer: Some(TransformerSpec::Store {
                    addr: String::new(),
                }),
            },
        ],
        3,
        run_dir.path(),
    )
    .map_err(|e| e.to_string())?;
    for option in ["inline", "file", "store"] {
        // Median of the three run-means per point: one run perturbed by
        // unrelated machine load cannot flip a comparison.
        let means: Vec<f64> = sizes
            .iter()
            .map(|&s| {
                transfer_median_of_runs(&report, option, s)
                    .ok_or(format!("missing row {option}-{s}"))
            })
            .collect::<Result<_, _>>()?;
        let spreads: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&s| transfer_run_means(&report, option, s))
            .collect();
        println!(
            "    transfer {option}: {:?} ms",
            means
                .iter()
                .map(|m| (m * 1e5).round() / 100.0)
                .collect::<Vec<_>>()
        );
        for (i, pair) in means.windows(2).enumerate() {
            // Non-decreasing within measurement resolution. At the smallest
            // adjacent sizes the true delta (tens of microseconds on
            // loopback) is the same order as the per-point uncertainty, so
            // a decrease only counts when it clears the larger of a fixed
            // 20 us / 5% floor and a 2-sigma allowance estimated from the
            // spread of the run means — far below the millisecond-scale
            // effects this criterion exists to catch.
            let se_diff = (run_variance(&spreads[i]) + run_variance(&spreads[i + 1])).sqrt();
            let slack = (0.05 * pair[0]).max(20e-6).max(2.0 * se_diff);
            check(
                pair[1] >= pair[0] - slack,
                format!(
                    "{option}: round-trip decreased from {} B ({:.6}s) to {} B ({:.6}s)",
                    sizes[i],
                    pair[0],
                    sizes[i + 1],
                    pair[1]
                ),
            )?;
        }
    }

    // Crossover on the simulated remote executor: at 10 MB the store path
    // must beat inline payloads.
    let latency_spec = ExecutorSpec::LatencySim {
        sched_latency_s: 0.01,
        batch_size: 32,
        control_bandwidth: Some(64_000_000),
        inner: Box::new(ExecutorSpec::ThreadPool { workers: 4 }),
    };
    let crossover = bench_transfer(
        &latency_spec,
        &[10_000_000],
        &[
            TransferOption {
                label: "inline".to_owned(),
                transformer: None,
            },
            TransferOption {
                label: "store".to_owned(),
                transformer: Some(TransformerSpec::Store {
                    addr: String::new(),
                }),
            },
        ],
        3,
        run_dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let inline =
        transfer_median_of_runs(&crossover, "inline", 10_000_000).ok_or("missing inline row")?;
    let store =
        transfer_median_of_runs(&crossover, "store", 10_000_000).ok_or("missing store row")?;
    println!(
        "    crossover at 10 MB: inline {:.1} ms, store {:.1} ms",
        inline * 1e3,
        store * 1e3
    );
    check(
        store < inline,
        format!("store path ({store:.4}s) not faster than inline ({inline:.4}s) at 10 MB"),
    )
}

/// Sample variance of a point's run means, as the variance of their mean.
fn run_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    var / n as f64
}

// ---------------------------------------------------------------------------
// 7. Failure injection
// ---------------------------------------------------------------------------

fn criterion_7_failure_injection() -> Result<(), String> {
    // (a) rate-1 exception cascade over a 5-chain.
    let spec = ExecutorSpec::Serial;
    let (engine, sink) = engine_with_sink(&spec, 21);
    let injector = FailureInjector::wrap(&engine, FailureSpec::new(FailureType::Exception, 1.0, 5));
    let config = SyntheticConfig {
        structure: Structure::Sequential,
        task_count: 5,
        input_bytes: 16,
        output_bytes: 16,
        sleep_s: 0.0,
        seed: 4,
        window: None,
    };
    let outcome =
        tapsb::apps::synthetic::run_synthetic(&injector, &config).map_err(|e| e.to_string())?;
    check(
        outcome.failed == 5,
        format!("{} of 5 tasks failed", outcome.failed),
    )?;
    engine.shutdown(true);
    let records = sink.snapshot();
    let primaries = records
        .iter()
        .filter(|r| r.error_kind == "application")
        .count();
    let cascaded = records
        .iter()
        .filter(|r| r.error_kind == "dependency-failure")
        .count();
    check(
        primaries == 1 && cascaded == 4,
        format!("expected 1 primary + 4 dependency failures, got {primaries} + {cascaded}"),
    )?;

    // (b) rate-0 wrapping changes nothing but timing.
    let config = SyntheticConfig {
        structure: Structure::Diamond,
        task_count: 4,
        input_bytes: 128,
        output_bytes: 128,
        sleep_s: 0.0,
        seed: 8,
        window: None,
    };
    let (plain_engine, plain_sink) = engine_with_sink(&ExecutorSpec::Serial, 77);
    tapsb::apps::synthetic::run_synthetic(&plain_engine, &config).map_err(|e| e.to_string())?;
    plain_engine.shutdown(true);
    let (wrapped_engine, wrapped_sink) = engine_with_sink(&ExecutorSpec::Serial, 77);
    let injector = FailureInjector::wrap(
        &wrapped_engine,
        FailureSpec::new(FailureType::Exception, 0.0, 5),
    );
    tapsb::apps::synthetic::run_synthetic(&injector, &config).map_err(|e| e.to_string())?;
    wrapped_engine.shutdown(true);
    let plain = plain_sink.snapshot();
    let wrapped = wrapped_sink.snapshot();
    check(
        plain.len() == wrapped.len(),
        "rate-0 wrapper changed the task count".to_owned(),
    )?;
    for (a, b) in plain.iter().zip(wrapped.iter()) {
        let same = a.task_id == b.task_id
            && a.function == b.function
            && a.parents == b.parents
            && a.status == b.status
            && a.arg_bytes == b.arg_bytes
            && a.result_bytes == b.result_bytes;
        check(
            same,
            format!("rate-0 wrapper changed record for task {}", a.task_id),
        )?;
    }

    // (c) binomial rate check: 10 000 independent tasks at p = 0.1.
    let (engine, sink) = engine_with_sink(&ExecutorSpec::Serial, 3);
    let injector =
        FailureInjector::wrap(&engine, FailureSpec::new(FailureType::Exception, 0.1, 4242));
    let config = SyntheticConfig {
        structure: Structure::Bag,
        task_count: 10_000,
        input_bytes: 0,
        output_bytes: 0,
        sleep_s: 0.0,
        seed: 4,
        window: Some(64),
    };
    let outcome =
        tapsb::apps::synthetic::run_synthetic(&injector, &config).map_err(|e| e.to_string())?;
    engine.shutdown(true);
    let failed = outcome.failed as f64;
    let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
    println!(
        "    binomial: {failed} of 10000 failed (expected 1000 ± {:.0})",
        3.0 * sigma
    );
    check(
        (failed - 1_000.0).abs() <= 3.0 * sigma,
        format!("failed fraction {failed} outside 3 sigma of 1000"),
    )?;
    check(
        sink.len() == 10_000,
        format!("expected 10000 records, got {}", sink.len()),
    )?;

    // (d) worker-kill mid-task: worker-failure terminal state, pool keeps
    // serving.
    let pool = WorkerPoolExecutor::start(2, Some(worker_bin()), Duration::from_secs(60))
        .map_err(|e| e.to_string())?;
    let pool = Arc::new(pool);
    let engine = Engine::builder()
        .executor(pool.clone())
        .seed(6)
        .build()
        .map_err(|e| e.to_string())?;
    let victim = engine
        .submit(
            "sleep_noop",
            vec![
                tapsb::engine::TaskInput::bytes(vec![]),
                tapsb::engine::TaskInput::float(30.0),
                tapsb::engine::TaskInput::int(0),
            ],
        )
        .map_err(|e| e.to_string())?;
    let deadline = Instant::now() + Duration::from_secs(10);
    let index = loop {
        if let Some(i) = (0..2).find(|&i| pool.current_task(i).is_some()) {
            break i;
        }
        check(
            Instant::now() < deadline,
            "victim task never dispatched".to_owned(),
        )?;
        std::thread::sleep(Duration::from_millis(10));
    };
    pool.kill_worker(index).map_err(|e| e.to_string())?;
    match victim.result(Some(Duration::from_secs(30))) {
        Err(tapsb::WaitError::Task(tapsb::TaskError::WorkerFailure(_))) => {}
        other => return Err(format!("expected worker failure, got {other:?}")),
    }
    let follow_up = engine
        .submit("add1", vec![tapsb::engine::TaskInput::int(1)])
        .map_err(|e| e.to_string())?;
    check(
        follow_up.result(Some(Duration::from_secs(30))).is_ok(),
        "pool stopped serving tasks after the kill".to_owned(),
    )?;
    engine.shutdown(true);
    Ok(())
}

// ---------------------------------------------------------------------------
// 8. Telemetry integrity
// ---------------------------------------------------------------------------

fn criterion_8_telemetry_integrity() -> Result<(), String> {
    // Representative runs across executors; ordering, makespan arithmetic,
    // and one-record-per-task are asserted by verify_records.
    for (kind, spec) in executor_kinds() {
        let (engine, sink) = engine_with_sink(&spec, 31);
        let outcome = tapsb::apps::synthetic::run_synthetic(
            &engine,
            &SyntheticConfig {
                structure: Structure::Diamond,
                task_count: 6,
                input_bytes: 256,
                output_bytes: 256,
                sleep_s: 0.005,
                seed: 9,
                window: None,
            },
        )
        .map_err(|e| format!("{kind}: {e}"))?;
        check(outcome.failed == 0, format!("{kind}: tasks failed"))?;
        let workers = engine.worker_count();
        engine.shutdown(true);
        let records = sink.snapshot();
        check(
            records.len() == 8,
            format!("{kind}: expected 8 records, got {}", records.len()),
        )?;
        verify_records(&records, SKEW_US).map_err(|e| format!("{kind}: {e}"))?;
        utilization_bound(&records, workers, SKEW_US).map_err(|e| format!("{kind}: {e}"))?;
    }

    // Concurrent-append stress: 10 000 records from 2 writers, every line
    // parseable.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("stress.jsonl");
    let sink = Arc::new(JsonlSink::create(&path).map_err(|e| e.to_string())?);
    std::thread::scope(|scope| {
        for writer in 0..2 {
            let sink = Arc::clone(&sink);
            scope.spawn(move || {
                let template = TaskRecord {
                    task_id: String::new(),
                    function: "stress".to_owned(),
                    parents: vec![],
                    submitted_at: 1,
                    completed_at: 4,
                    exec_started_at: 2,
                    exec_ended_at: 3,
                    transform_args_us: 0,
                    resolve_args_us: 0,
                    transform_result_us: 0,
                    makespan_us: 3,
                    status: TaskStatus::Succeeded,
                    error_kind: String::new(),
                    executor: "serial".to_owned(),
                    arg_bytes: 0,
                    result_bytes: 0,
                };
                for i in 0..5_000 {
                    let mut record = template.clone();
                    record.task_id = format!("{writer}-{i}");
                    sink.log(&record).expect("append");
                }
            });
        }
    });
    sink.close().map_err(|e| e.to_string())?;
    let loaded = load_records(&path).map_err(|e| format!("stress file: {e}"))?;
    check(
        loaded.len() == 10_000,
        format!("expected 10000 parseable lines, got {}", loaded.len()),
    )
}

// ---------------------------------------------------------------------------
// 9. Reproducibility
// ---------------------------------------------------------------------------

fn criterion_9_reproducibility() -> Result<(), String> {
    // `run --config` of a saved config reproduces the task DAG.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = RunConfig {
        app: AppSpec::Cholesky(CholeskyConfig {
            n: 32,
            block: 8,
            seed: 5,
        }),
        executor: worker_pool_spec(2),
        transformer: None,
        filter: FilterSpec::Never,
        failure: None,
        run_dir: dir.path().to_path_buf(),
        seed: 5,
    };
    let first = execute_run(&config).map_err(|e| e.to_string())?;
    check(first.app_error.is_none(), "first run failed".to_owned())?;
    let saved: RunConfig = serde_json::from_str(
        &std::fs::read_to_string(first.run_dir.join("config.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let second = execute_run(&saved).map_err(|e| e.to_string())?;
    check(second.app_error.is_none(), "config rerun failed".to_owned())?;
    check(
        first.run_dir != second.run_dir,
        "rerun reused the run directory".to_owned(),
    )?;
    let first_records = load_records(first.records_path()).map_err(|e| e.to_string())?;
    let second_records = load_records(second.records_path()).map_err(|e| e.to_string())?;
    check(
        dag_signature(&first_records).map_err(|e| e.to_string())?
            == dag_signature(&second_records).map_err(|e| e.to_string())?,
        "config rerun produced a different task DAG".to_owned(),
    )?;

    // Fixed seeds pin corpora, matrices, and failure sets bit-for-bit.
    check(
        mapreduce::generate_corpus(20, 7, 11, 9) == mapreduce::generate_corpus(20, 7, 11, 9),
        "corpus not reproducible".to_owned(),
    )?;
    check(
        generate_input(48, 16, 3) == generate_input(48, 16, 3),
        "matrix not reproducible".to_owned(),
    )?;
    let failure_spec = FailureSpec::new(FailureType::Exception, 0.3, 99);
    check(
        FailureInjector::planned_failures(&failure_spec, 5_000)
            == FailureInjector::planned_failures(&failure_spec, 5_000),
        "failure set not reproducible".to_owned(),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    type Criterion = fn() -> Result<(), String>;
    let criteria: Vec<(&str, Criterion)> = vec![
        (
            "1 cholesky correctness across executors",
            criterion_1_cholesky_correctness,
        ),
        ("2 cholesky DAG shape", criterion_2_cholesky_dag_shape),
        (
            "3 mapreduce sequential oracle",
            criterion_3_mapreduce_oracle,
        ),
        (
            "4 transformer round-trip and neutrality",
            criterion_4_transformer_round_trip,
        ),
        ("5 scaling bound", criterion_5_scaling_bound),
        (
            "6 transfer monotonicity and crossover",
            criterion_6_transfer,
        ),
        ("7 failure injection", criterion_7_failure_injection),
        ("8 telemetry integrity", criterion_8_telemetry_integrity),
        ("9 reproducibility", criterion_9_reproducibility),
    ];

    let mut failures = Vec::new();
    for (name, run) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(run)
            .unwrap_or_else(|panic| Err(format!("panicked: {}", panic_text(panic.as_ref()))));
        let elapsed = started.elapsed();
        match result {
            Ok(()) => println!("ACCEPTANCE {name}: PASS ({elapsed:.2?})"),
            Err(reason) => {
                println!("ACCEPTANCE {name}: FAIL ({elapsed:.2?}) — {reason}");
                failures.push((name, reason));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "acceptance criteria failed: {failures:#?}"
    );
}

fn panic_text(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(text) = panic.downcast_ref::<&str>() {
        (*text).to_owned()
    } else if let Some(text) = panic.downcast_ref::<String>() {
        text.clone()
    } else {
        "opaque panic".to_owned()
    }
}
