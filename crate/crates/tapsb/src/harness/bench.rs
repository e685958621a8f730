//! The three benchmark drivers: makespan, scaling, and data transfer.

use super::report::BenchmarkReport;
use super::{execute_run, HarnessError, RunConfig};
use crate::apps::synthetic::SLEEP_NOOP_TASK;
use crate::engine::{Engine, EngineSpec, TaskInput, TaskSpawner};
use crate::executor::ExecutorSpec;
use crate::rng::SeededRng;
use crate::transform::{FilterSpec, StoreService, TransformerSpec};
use crate::value::Value;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Runs each labeled config `repetitions` times; every repetition records
/// the wall time from executor construction through engine shutdown. A
/// failed run contributes a `failed` row and the benchmark continues.
pub fn bench_makespan(configs: &[(String, RunConfig)], repetitions: u32) -> BenchmarkReport {
    let mut report = BenchmarkReport::default();
    for (label, config) in configs {
        for rep in 0..repetitions {
            match execute_run(config) {
                Ok(output) if output.app_error.is_none() => {
                    report.push(
                        label.clone(),
                        "makespan",
                        "s",
                        rep,
                        output.makespan.as_secs_f64(),
                        Some(output.run_dir.clone()),
                    );
                    if let Some(tasks_per_second) = output
                        .summary
                        .get("tasks_per_second")
                        .and_then(|v| v.as_f64())
                    {
                        report.push(
                            label.clone(),
                            "throughput",
                            "tasks/s",
                            rep,
                            tasks_per_second,
                            Some(output.run_dir),
                        );
                    }
                }
                Ok(output) => {
                    report.push(
                        label.clone(),
                        "failed",
                        "count",
                        rep,
                        1.0,
                        Some(output.run_dir),
                    );
                }
                Err(_) => {
                    report.push(label.clone(), "failed", "count", rep, 1.0, None);
                }
            }
        }
    }
    report
}

/// Bag-of-tasks scaling sweep: for each labeled executor spec, runs
/// `task_count` sleep tasks with exactly `workers` outstanding and reports
/// completed tasks per second (submission through last completion).
pub fn bench_scaling(
    specs: &[(String, ExecutorSpec)],
    task_count: usize,
    sleep_s: f64,
    run_dir: &Path,
    repetitions: u32,
) -> BenchmarkReport {
    let mut report = BenchmarkReport::default();
    let configs: Vec<(String, RunConfig)> = specs
        .iter()
        .map(|(label, executor)| {
            let config = RunConfig {
                app: crate::apps::AppSpec::Synthetic(crate::apps::synthetic::SyntheticConfig {
                    structure: crate::apps::synthetic::Structure::Bag,
                    task_count,
                    input_bytes: 0,
                    output_bytes: 0,
                    sleep_s,
                    seed: 1,
                    window: None,
                }),
                executor: executor.clone(),
                transformer: None,
                filter: FilterSpec::Never,
                failure: None,
                run_dir: run_dir.to_path_buf(),
                seed: 1,
            };
            (label.clone(), config)
        })
        .collect();
    for (label, config) in &configs {
        for rep in 0..repetitions {
            match execute_run(config) {
                Ok(output) if output.app_error.is_none() => {
                    let throughput = output
                        .summary
                        .get("tasks_per_second")
                        .and_then(|v| v.as_f64())
                        .unwrap_or(0.0);
                    report.push(
                        label.clone(),
                        "throughput",
                        "tasks/s",
                        rep,
                        throughput,
                        Some(output.run_dir.clone()),
                    );
                    report.push(
                        label.clone(),
                        "makespan",
                        "s",
                        rep,
                        output.makespan.as_secs_f64(),
                        Some(output.run_dir),
                    );
                }
                Ok(output) => {
                    report.push(
                        label.clone(),
                        "failed",
                        "count",
                        rep,
                        1.0,
                        Some(output.run_dir),
                    );
                }
                Err(_) => report.push(label.clone(), "failed", "count", rep, 1.0, None),
            }
        }
    }
    report
}

/// One data-management option in a transfer sweep.
#[derive(Debug, Clone)]
pub struct TransferOption {
    pub label: String,
    /// `None` keeps payloads inline.
    pub transformer: Option<TransformerSpec>,
}

/// Round-trip benchmark: tasks take `size` input bytes and return `size`
/// output bytes. Per (option, size, run), `workers` driver threads each
/// measure 10 sequential submit→result round trips; the row value is the
/// mean over those `10 × workers` tasks.
pub fn bench_transfer(
    executor: &ExecutorSpec,
    sizes: &[usize],
    options: &[TransferOption],
    runs: u32,
    run_dir: &Path,
) -> Result<BenchmarkReport, HarnessError> {
    const TASKS_PER_WORKER: usize = 10;
    let mut report = BenchmarkReport::default();
    std::fs::create_dir_all(run_dir)?;

    for option in options {
        // One engine per data-management option; an empty store address
        // gets an embedded in-process store for the sweep's lifetime.
        let mut embedded: Option<StoreService> = None;
        let transformer = match &option.transformer {
            Some(TransformerSpec::Store { addr }) if addr.is_empty() => {
                let service = StoreService::bind("127.0.0.1:0")
                    .map_err(|e| HarnessError::InvalidConfig(format!("embedded store: {e}")))?;
                let spec = TransformerSpec::Store {
                    addr: service.addr().to_owned(),
                };
                embedded = Some(service);
                Some(spec)
            }
            Some(TransformerSpec::File { dir }) if dir.as_os_str().is_empty() => {
                Some(TransformerSpec::File {
                    dir: run_dir.join(format!("transfer-{}-data", option.label)),
                })
            }
            other => other.clone(),
        };
        let cache_dir = match &transformer {
            Some(TransformerSpec::File { dir }) => Some(dir.clone()),
            _ => None,
        };
        let filter = if transformer.is_some() {
            FilterSpec::MinSize { threshold: 256 }
        } else {
            FilterSpec::Never
        };
        let spec = EngineSpec {
            executor: executor.clone(),
            transformer,
            filter,
            record_path: None,
            seed: 7,
        };
        let engine = Arc::new(Engine::from_spec(&spec)?);
        let workers = engine.worker_count().max(1);

        // Warm the whole path (workers, transformer connections, allocator)
        // before anything is timed.
        let warmup: Vec<_> = (0..workers * 2)
            .map(|i| {
                engine
                    .submit(
                        SLEEP_NOOP_TASK,
                        vec![
                            TaskInput::Value(Value::Bytes(vec![i as u8; 65_536])),
                            TaskInput::float(0.0),
                            TaskInput::int(65_536),
                        ],
                    )
                    .expect("warmup submission")
            })
            .collect();
        for future in warmup {
            future.result(None).expect("warmup result");
        }

        // Runs interleave over the size sweep so every size's repetitions
        // sample separated time windows. Each sweep measures large sizes
        // first: a heavy block's hangover (reclaim, writeback) then lands
        // on a point whose margin over its smaller neighbor dwarfs it,
        // instead of on the smallest, most delicate point.
        let mut sweep: Vec<usize> = sizes.to_vec();
        sweep.sort_unstable_by(|a, b| b.cmp(a));
        for run in 0..runs {
            for &size in &sweep {
                let mut round_trips: Vec<f64> = Vec::with_capacity(workers * TASKS_PER_WORKER);
                std::thread::scope(|scope| {
                    let mut handles = Vec::with_capacity(workers);
                    for driver in 0..workers {
                        let engine = Arc::clone(&engine);
                        handles.push(scope.spawn(move || {
                            let mut rng = SeededRng::derive(
                                driver as u64 ^ (run as u64) << 32,
                                "transfer-payload",
                            );
                            let mut times = Vec::with_capacity(TASKS_PER_WORKER);
                            // One untimed warmup round trip per point keeps
                            // cold-start costs (lazy init, first connections,
                            // page faults) out of the measured mean.
                            for round in 0..=TASKS_PER_WORKER {
                                let payload = rng.bytes(size);
                                let started = Instant::now();
                                let future = engine
                                    .submit(
                                        SLEEP_NOOP_TASK,
                                        vec![
                                            TaskInput::Value(Value::Bytes(payload)),
                                            TaskInput::float(0.0),
                                            TaskInput::int(size as i64),
                                        ],
                                    )
                                    .expect("transfer submission");
                                future.result(None).expect("transfer task result");
                                if round > 0 {
                                    times.push(started.elapsed().as_secs_f64());
                                }
                            }
                            times
                        }));
                    }
                    for handle in handles {
                        round_trips.extend(handle.join().expect("transfer driver thread"));
                    }
                });
                let mean = round_trips.iter().sum::<f64>() / round_trips.len() as f64;
                report.push(
                    format!("{}-{}", option.label, size),
                    "round-trip",
                    "s",
                    run,
                    mean,
                    None,
                );
                // Every future of this block is resolved; dropping its data
                // bounds store memory and dirty-page pressure, which would
                // otherwise bleed stalls into later measurements. Small
                // blocks are left alone — their footprint is trivial, and
                // the deletion churn itself would hang over the next
                // (smaller, more delicate) point. A short settle keeps the
                // reclaim out of the following block's samples.
                if size >= 100_000 {
                    if let Some(service) = &embedded {
                        service.clear();
                    }
                    if let Some(dir) = &cache_dir {
                        if let Ok(entries) = std::fs::read_dir(dir) {
                            for entry in entries.flatten() {
                                let _ = std::fs::remove_file(entry.path());
                            }
                        }
                    }
                    std::thread::sleep(Duration::from_millis(100));
                }
            }
        }
        engine.shutdown(true);
        drop(embedded);
    }
    Ok(report)
}

/// Mean round-trip across all runs of one option at one size.
pub fn transfer_mean(report: &BenchmarkReport, option_label: &str, size: usize) -> Option<f64> {
    report.mean(&format!("{option_label}-{size}"), "round-trip")
}

/// The per-run mean round-trip values for one option at one size.
pub fn transfer_run_means(report: &BenchmarkReport, option_label: &str, size: usize) -> Vec<f64> {
    let label = format!("{option_label}-{size}");
    report
        .rows
        .iter()
        .filter(|r| r.label == label && r.metric == "round-trip")
        .map(|r| r.value)
        .collect()
}

/// Median of the per-run means for one option at one size. Robust against
/// a single run being perturbed by unrelated load, which matters when a
/// comparison (rather than the raw numbers) is the deliverable.
pub fn transfer_median_of_runs(
    report: &BenchmarkReport,
    option_label: &str,
    size: usize,
) -> Option<f64> {
    let mut values = transfer_run_means(report, option_label, size);
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(values[values.len() / 2])
}
