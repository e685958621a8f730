//! Command-line interface.
//!
//! `run` executes one application benchmark; the `bench-*` subcommands
//! drive the makespan/scaling/transfer studies and write CSV reports;
//! `store-serve` hosts the key-value store; the hidden `worker` subcommand
//! is how worker-pool processes re-enter this binary.

use super::bench::{bench_makespan, bench_scaling, bench_transfer, TransferOption};
use super::report::write_report;
use super::{execute_run, RunConfig, RUN_DIR_ENV};
use crate::apps::cholesky::CholeskyConfig;
use crate::apps::failures::{FailureSpec, FailureType};
use crate::apps::mapreduce::{CorpusMode, MapReduceConfig};
use crate::apps::synthetic::{Structure, SyntheticConfig};
use crate::apps::AppSpec;
use crate::executor::ExecutorSpec;
use crate::transform::{FilterSpec, TransformerSpec};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "tapsb",
    version,
    about = "Benchmark harness for task-based execution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one application benchmark into a fresh run directory
    Run(Box<RunArgs>),
    /// Measure makespan over saved run configs
    BenchMakespan(BenchMakespanArgs),
    /// Sweep executors and worker counts over a bag of sleep tasks
    BenchScaling(BenchScalingArgs),
    /// Measure task round-trip time across payload sizes and transformers
    BenchTransfer(BenchTransferArgs),
    /// Serve the key-value object store
    StoreServe(StoreServeArgs),
    /// Worker-process mode (spawned by the worker-pool executor)
    #[command(hide = true)]
    Worker(WorkerArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Application name (cholesky | mapreduce | synthetic)
    #[arg(long)]
    app: Option<String>,
    /// Load a saved config.json; other flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parent directory for run directories (default: $TAPSB_RUN_DIR or ./runs)
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Execute the run this many times (fresh run directory each)
    #[arg(long, default_value_t = 1)]
    repeat: u32,

    /// Executor kind (serial | thread-pool | worker-pool | latency-sim)
    #[arg(long)]
    executor: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// latency-sim: scheduling interval, seconds
    #[arg(long)]
    sched_latency: Option<f64>,
    /// latency-sim: tasks dispatched per interval
    #[arg(long)]
    batch_size: Option<usize>,
    /// latency-sim: simulated control-channel bandwidth, bytes/s
    #[arg(long)]
    control_bandwidth: Option<u64>,
    /// latency-sim: inner executor kind
    #[arg(long)]
    inner: Option<String>,

    /// Data transformer (none | file | store)
    #[arg(long)]
    transformer: Option<String>,
    /// Store address for --transformer store (empty: embedded store)
    #[arg(long)]
    store_addr: Option<String>,
    /// Cache directory for --transformer file (default: <run>/data)
    #[arg(long)]
    transform_dir: Option<PathBuf>,
    /// Filter (never | always | min-size:BYTES | type-tag:TAGS)
    #[arg(long)]
    filter: Option<String>,

    /// cholesky: matrix side length
    #[arg(long)]
    n: Option<usize>,
    /// cholesky: tile side length
    #[arg(long)]
    block: Option<usize>,

    /// mapreduce: corpus mode (generated | files)
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    words_per_doc: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    /// mapreduce files mode: directory tree of text files
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long)]
    map_tasks: Option<u64>,
    /// mapreduce: how many top words to write
    #[arg(long)]
    top: Option<usize>,

    /// synthetic: DAG structure (sequential | reduce | bag | diamond)
    #[arg(long)]
    structure: Option<String>,
    #[arg(long)]
    task_count: Option<usize>,
    #[arg(long)]
    input_bytes: Option<usize>,
    #[arg(long)]
    output_bytes: Option<usize>,
    /// synthetic: per-task sleep, seconds
    #[arg(long)]
    sleep: Option<f64>,

    /// Inject failures (exception | divide-by-zero | memory | walltime |
    /// dependency | worker-kill)
    #[arg(long)]
    failure_type: Option<String>,
    #[arg(long)]
    failure_rate: Option<f64>,
    #[arg(long)]
    failure_memory_bytes: Option<u64>,
    #[arg(long)]
    failure_walltime: Option<f64>,
}

#[derive(Args)]
struct BenchMakespanArgs {
    /// Saved config.json files (repeatable)
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    repeat: u32,
    /// Report base path (writes <out>.csv and <out>_summary.csv)
    #[arg(long)]
    out: PathBuf,
    /// Override the run directory of every loaded config
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchScalingArgs {
    /// Comma-separated executor kinds
    #[arg(long, default_value = "serial,thread-pool,worker-pool")]
    executors: String,
    /// Comma-separated worker counts
    #[arg(long, default_value = "1,2,4,8")]
    workers: String,
    #[arg(long, default_value_t = 1000)]
    task_count: usize,
    /// Per-task sleep, seconds
    #[arg(long, default_value_t = 0.0)]
    sleep: f64,
    #[arg(long, default_value_t = 1)]
    repeat: u32,
    #[arg(long, default_value_t = 0.01)]
    sched_latency: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchTransferArgs {
    /// Executor kind carrying the tasks
    #[arg(long, default_value = "worker-pool")]
    executor: String,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated payload sizes, bytes
    #[arg(long, default_value = "1000,10000,100000,1000000,10000000")]
    sizes: String,
    /// Comma-separated data options (none | file | store)
    #[arg(long, default_value = "none,file,store")]
    transformers: String,
    #[arg(long, default_value_t = 3)]
    runs: u32,
    #[arg(long, default_value_t = 0.01)]
    sched_latency: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long)]
    control_bandwidth: Option<u64>,
    /// latency-sim inner executor kind
    #[arg(long, default_value = "thread-pool")]
    inner: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StoreServeArgs {
    #[arg(long, default_value = "127.0.0.1:0")]
    bind: String,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long)]
    connect: String,
    #[arg(long)]
    index: u32,
}

/// A user error: printed to stderr, exit status 2.
#[derive(Debug)]
struct UsageError(String);

type UsageResult<T> = Result<T, UsageError>;

fn usage(message: impl Into<String>) -> UsageError {
    UsageError(message.into())
}

pub fn main() -> i32 {
    run_cli(std::env::args())
}

/// Parses and executes `argv`; returns the process exit status.
pub fn run_cli(argv: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Command::Worker(args) => crate::executor::run_worker(&args.connect, args.index),
        Command::StoreServe(args) => cmd_store_serve(&args),
        Command::Run(args) => unwrap_usage(cmd_run(&args)),
        Command::BenchMakespan(args) => unwrap_usage(cmd_bench_makespan(&args)),
        Command::BenchScaling(args) => unwrap_usage(cmd_bench_scaling(&args)),
        Command::BenchTransfer(args) => unwrap_usage(cmd_bench_transfer(&args)),
    }
}

fn unwrap_usage(result: UsageResult<i32>) -> i32 {
    match result {
        Ok(status) => status,
        Err(UsageError(message)) => {
            eprintln!("error: {message}");
            2
        }
    }
}

fn cmd_store_serve(args: &StoreServeArgs) -> i32 {
    match crate::transform::StoreService::bind(&args.bind) {
        Ok(service) => {
            println!("store listening on {}", service.addr());
            loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            }
        }
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.bind);
            1
        }
    }
}

fn default_run_dir() -> PathBuf {
    std::env::var(RUN_DIR_ENV)
        .ok()
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_executor(args: &RunArgs, kind: &str) -> UsageResult<ExecutorSpec> {
    let workers = args.workers.unwrap_or(4);
    match kind {
        "serial" => Ok(ExecutorSpec::Serial),
        "thread-pool" => Ok(ExecutorSpec::ThreadPool { workers }),
        "worker-pool" => Ok(ExecutorSpec::worker_pool(workers)),
        "latency-sim" => {
            let inner_kind = args.inner.as_deref().unwrap_or("thread-pool");
            let inner = match inner_kind {
                "serial" => ExecutorSpec::Serial,
                "thread-pool" => ExecutorSpec::ThreadPool { workers },
                "worker-pool" => ExecutorSpec::worker_pool(workers),
                other => return Err(usage(format!("unknown inner executor {other:?}"))),
            };
            Ok(ExecutorSpec::LatencySim {
                sched_latency_s: args.sched_latency.unwrap_or(0.01),
                batch_size: args.batch_size.unwrap_or(32),
                control_bandwidth: args.control_bandwidth,
                inner: Box::new(inner),
            })
        }
        other => Err(usage(format!(
            "unknown executor {other:?} (expected one of {})",
            ExecutorSpec::KIND_NAMES.join(", ")
        ))),
    }
}

fn require<T: Copy>(value: Option<T>, flag: &str, app: &str) -> UsageResult<T> {
    value.ok_or_else(|| usage(format!("--{flag} is required for --app {app}")))
}

fn build_app_spec(args: &RunArgs, name: &str, seed: u64) -> UsageResult<AppSpec> {
    match name {
        "cholesky" => Ok(AppSpec::Cholesky(CholeskyConfig {
            n: require(args.n, "n", "cholesky")?,
            block: require(args.block, "block", "cholesky")?,
            seed,
        })),
        "mapreduce" => {
            let mode = args.mode.as_deref().unwrap_or("generated");
            let corpus = match mode {
                "generated" => CorpusMode::Generated {
                    docs: args.docs.unwrap_or(100),
                    words_per_doc: args.words_per_doc.unwrap_or(100),
                    vocab_size: args.vocab.unwrap_or(1000),
                    seed,
                },
                "files" => CorpusMode::Files {
                    root: args
                        .dir
                        .clone()
                        .ok_or_else(|| usage("--dir is required for --mode files"))?,
                },
                other => return Err(usage(format!("unknown mapreduce mode {other:?}"))),
            };
            Ok(AppSpec::Mapreduce(MapReduceConfig {
                corpus,
                map_tasks: args.map_tasks.unwrap_or(4),
                n_top: args.top.unwrap_or(10),
            }))
        }
        "synthetic" => {
            let structure_text = args
                .structure
                .as_deref()
                .ok_or_else(|| usage("--structure is required for --app synthetic"))?;
            let structure = Structure::parse(structure_text)
                .ok_or_else(|| usage(format!("unknown structure {structure_text:?}")))?;
            Ok(AppSpec::Synthetic(SyntheticConfig {
                structure,
                task_count: require(args.task_count, "task-count", "synthetic")?,
                input_bytes: args.input_bytes.unwrap_or(0),
                output_bytes: args.output_bytes.unwrap_or(0),
                sleep_s: args.sleep.unwrap_or(0.0),
                seed,
                window: None,
            }))
        }
        other => Err(usage(format!(
            "unknown app {other:?} (expected one of {})",
            AppSpec::NAMES.join(", ")
        ))),
    }
}

/// Applies app-parameter flags onto a config loaded from a file.
fn override_app_params(app: &mut AppSpec, args: &RunArgs, seed: Option<u64>) {
    match app {
        AppSpec::Cholesky(cfg) => {
            if let Some(n) = args.n {
                cfg.n = n;
            }
            if let Some(block) = args.block {
                cfg.block = block;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
        }
        AppSpec::Mapreduce(cfg) => {
            if let CorpusMode::Generated {
                docs,
                words_per_doc,
                vocab_size,
                seed: corpus_seed,
            } = &mut cfg.corpus
            {
                if let Some(v) = args.docs {
                    *docs = v;
                }
                if let Some(v) = args.words_per_doc {
                    *words_per_doc = v;
                }
                if let Some(v) = args.vocab {
                    *vocab_size = v;
                }
                if let Some(v) = seed {
                    *corpus_seed = v;
                }
            }
            if let Some(v) = args.map_tasks {
                cfg.map_tasks = v;
            }
            if let Some(v) = args.top {
                cfg.n_top = v;
            }
        }
        AppSpec::Synthetic(cfg) => {
            if let Some(text) = &args.structure {
                if let Some(s) = Structure::parse(text) {
                    cfg.structure = s;
                }
            }
            if let Some(v) = args.task_count {
                cfg.task_count = v;
            }
            if let Some(v) = args.input_bytes {
                cfg.input_bytes = v;
            }
            if let Some(v) = args.output_bytes {
                cfg.output_bytes = v;
            }
            if let Some(v) = args.sleep {
                cfg.sleep_s = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
        }
    }
}

fn build_transformer(args: &RunArgs, kind: &str) -> UsageResult<Option<TransformerSpec>> {
    match kind {
        "none" => Ok(None),
        "file" => Ok(Some(TransformerSpec::File {
            dir: args.transform_dir.clone().unwrap_or_default(),
        })),
        "store" => Ok(Some(TransformerSpec::Store {
            addr: args.store_addr.clone().unwrap_or_default(),
        })),
        other => Err(usage(format!(
            "unknown transformer {other:?} (expected none, file or store)"
        ))),
    }
}

fn assemble_run_config(args: &RunArgs) -> UsageResult<RunConfig> {
    let mut config: RunConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("cannot parse config {}: {e}", path.display())))?
        }
        None => {
            let app_name = args
                .app
                .as_deref()
                .ok_or_else(|| usage("--app or --config is required"))?;
            let seed = args.seed.unwrap_or(0);
            RunConfig {
                app: build_app_spec(args, app_name, seed)?,
                executor: ExecutorSpec::Serial,
                transformer: None,
                filter: FilterSpec::Never,
                failure: None,
                run_dir: default_run_dir(),
                seed,
            }
        }
    };

    // Flags override whatever the config file established.
    if args.config.is_some() {
        if let Some(app_name) = args.app.as_deref() {
            if app_name != config.app.name() {
                config.app = build_app_spec(args, app_name, args.seed.unwrap_or(config.seed))?;
            } else {
                override_app_params(&mut config.app, args, args.seed);
            }
        } else {
            override_app_params(&mut config.app, args, args.seed);
        }
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(run_dir) = &args.run_dir {
        config.run_dir = run_dir.clone();
    }
    if let Some(kind) = args.executor.as_deref() {
        config.executor = parse_executor(args, kind)?;
    } else if let Some(workers) = args.workers {
        match &mut config.executor {
            ExecutorSpec::ThreadPool { workers: w }
            | ExecutorSpec::WorkerPool { workers: w, .. } => {
                *w = workers;
            }
            _ => {}
        }
    }
    if let Some(kind) = args.transformer.as_deref() {
        config.transformer = build_transformer(args, kind)?;
        if config.transformer.is_some()
            && args.filter.is_none()
            && config.filter == FilterSpec::Never
        {
            config.filter = FilterSpec::MinSize { threshold: 1024 };
        }
        if config.transformer.is_none() {
            config.filter = FilterSpec::Never;
        }
    }
    if let Some(filter_text) = args.filter.as_deref() {
        config.filter = FilterSpec::parse(filter_text).map_err(usage)?;
    }
    if let Some(failure_text) = args.failure_type.as_deref() {
        if failure_text == "none" {
            config.failure = None;
        } else {
            let failure_type = FailureType::parse(failure_text).ok_or_else(|| {
                usage(format!(
                    "unknown failure type {failure_text:?} (expected one of {})",
                    FailureType::NAMES.join(", ")
                ))
            })?;
            let mut spec =
                FailureSpec::new(failure_type, args.failure_rate.unwrap_or(1.0), config.seed);
            if let Some(bytes) = args.failure_memory_bytes {
                spec.memory_bytes = bytes;
            }
            if let Some(walltime) = args.failure_walltime {
                spec.walltime_s = walltime;
            }
            config.failure = Some(spec);
        }
    } else if let Some(rate) = args.failure_rate {
        if let Some(failure) = &mut config.failure {
            failure.rate = rate;
        }
    }
    Ok(config)
}

fn cmd_run(args: &RunArgs) -> UsageResult<i32> {
    let config = assemble_run_config(args)?;
    config.validate().map_err(|e| usage(e.to_string()))?;
    let mut status = 0;
    for rep in 0..args.repeat.max(1) {
        match execute_run(&config) {
            Ok(output) => {
                println!("run[{rep}] dir: {}", output.run_dir.display());
                println!(
                    "run[{rep}] makespan: {:.6} s, records: {}",
                    output.makespan.as_secs_f64(),
                    output.record_count
                );
                if let Some(error) = output.app_error {
                    eprintln!("run[{rep}] failed: {error}");
                    status = 1;
                }
            }
            Err(e) => {
                eprintln!("run[{rep}] error: {e}");
                status = 1;
            }
        }
    }
    Ok(status)
}

fn cmd_bench_makespan(args: &BenchMakespanArgs) -> UsageResult<i32> {
    let mut configs = Vec::with_capacity(args.configs.len());
    for path in &args.configs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| usage(format!("cannot parse config {}: {e}", path.display())))?;
        if let Some(run_dir) = &args.run_dir {
            config.run_dir = run_dir.clone();
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "config".into());
        configs.push((label, config));
    }
    let report = bench_makespan(&configs, args.repeat);
    finish_report(&report, &args.out)
}

fn parse_csv_list<T: std::str::FromStr>(text: &str, what: &str) -> UsageResult<Vec<T>> {
    text.split(',')
        .filter(|part| !part.is_empty())
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("invalid {what}: {part:?}")))
        })
        .collect()
}

fn cmd_bench_scaling(args: &BenchScalingArgs) -> UsageResult<i32> {
    let kinds: Vec<String> = parse_csv_list(&args.executors, "executor")?;
    let workers: Vec<usize> = parse_csv_list(&args.workers, "worker count")?;
    let mut specs = Vec::new();
    for kind in &kinds {
        for &w in &workers {
            let spec = match kind.as_str() {
                "serial" => {
                    if w == 1 {
                        ExecutorSpec::Serial
                    } else {
                        continue; // serial has no worker dimension
                    }
                }
                "thread-pool" => ExecutorSpec::ThreadPool { workers: w },
                "worker-pool" => ExecutorSpec::worker_pool(w),
                "latency-sim" => ExecutorSpec::LatencySim {
                    sched_latency_s: args.sched_latency,
                    batch_size: args.batch_size,
                    control_bandwidth: None,
                    inner: Box::new(ExecutorSpec::ThreadPool { workers: w }),
                },
                other => return Err(usage(format!("unknown executor {other:?}"))),
            };
            let label = if matches!(spec, ExecutorSpec::Serial) {
                "serial".to_owned()
            } else {
                format!("{kind}-w{w}")
            };
            specs.push((label, spec));
        }
    }
    let run_dir = args.run_dir.clone().unwrap_or_else(default_run_dir);
    let report = bench_scaling(
        &specs,
        args.task_count,
        args.sleep,
        &run_dir,
        args.repeat.max(1),
    );
    finish_report(&report, &args.out)
}

fn cmd_bench_transfer(args: &BenchTransferArgs) -> UsageResult<i32> {
    let sizes: Vec<usize> = parse_csv_list(&args.sizes, "size")?;
    let workers = args.workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|p| p.get().min(32))
            .unwrap_or(4)
    });
    let proxy_args = RunArgs {
        workers: Some(workers),
        sched_latency: Some(args.sched_latency),
        batch_size: Some(args.batch_size),
        control_bandwidth: args.control_bandwidth,
        inner: Some(args.inner.clone()),
        ..blank_run_args()
    };
    let executor = parse_executor(&proxy_args, &args.executor)?;
    let mut options = Vec::new();
    for label in args.transformers.split(',').filter(|p| !p.is_empty()) {
        let transformer = match label.trim() {
            "none" => None,
            "file" => Some(TransformerSpec::File {
                dir: PathBuf::new(),
            }),
            "store" => Some(TransformerSpec::Store {
                addr: String::new(),
            }),
            other => return Err(usage(format!("unknown transformer {other:?}"))),
        };
        options.push(TransferOption {
            label: label.trim().to_owned(),
            transformer,
        });
    }
    let run_dir = args.run_dir.clone().unwrap_or_else(default_run_dir);
    let report = bench_transfer(&executor, &sizes, &options, args.runs.max(1), &run_dir)
        .map_err(|e| usage(e.to_string()))?;
    finish_report(&report, &args.out)
}

fn finish_report(
    report: &super::report::BenchmarkReport,
    out: &std::path::Path,
) -> UsageResult<i32> {
    match write_report(report, out) {
        Ok((data, summary)) => {
            println!("wrote {}", data.display());
            println!("wrote {}", summary.display());
            for (label, metric, unit, mean, stddev, count) in report.summaries() {
                println!("{label} {metric}: {mean:.6} ± {stddev:.6} {unit} (n={count})");
            }
            Ok(0)
        }
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            Ok(1)
        }
    }
}

fn blank_run_args() -> RunArgs {
    RunArgs {
        app: None,
        config: None,
        run_dir: None,
        seed: None,
        repeat: 1,
        executor: None,
        workers: None,
        sched_latency: None,
        batch_size: None,
        control_bandwidth: None,
        inner: None,
        transformer: None,
        store_addr: None,
        transform_dir: None,
        filter: None,
        n: None,
        block: None,
        mode: None,
        docs: None,
        words_per_doc: None,
        vocab: None,
        dir: None,
        map_tasks: None,
        top: None,
        structure: None,
        task_count: None,
        input_bytes: None,
        output_bytes: None,
        sleep: None,
        failure_type: None,
        failure_rate: None,
        failure_memory_bytes: None,
        failure_walltime: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(line: &str) -> impl IntoIterator<Item = String> + '_ {
        line.split_whitespace().map(str::to_owned)
    }

    fn parse_run(line: &str) -> RunArgs {
        match Cli::try_parse_from(argv(line)).unwrap().command {
            Command::Run(args) => *args,
            _ => panic!("expected run command"),
        }
    }

    #[test]
    fn assembles_synthetic_config_from_flags() {
        let args = parse_run(
            "tapsb run --app synthetic --structure bag --task-count 10 --executor serial --run-dir out --seed 9",
        );
        let config = assemble_run_config(&args).unwrap();
        assert_eq!(config.app.name(), "synthetic");
        assert_eq!(config.executor, ExecutorSpec::Serial);
        assert_eq!(config.run_dir, PathBuf::from("out"));
        assert_eq!(config.seed, 9);
        assert!(config.failure.is_none());
    }

    #[test]
    fn unknown_app_is_usage_error() {
        let args = parse_run("tapsb run --app nope --run-dir out");
        assert!(assemble_run_config(&args).is_err());
    }

    #[test]
    fn unknown_executor_is_usage_error() {
        let args =
            parse_run("tapsb run --app synthetic --structure bag --task-count 1 --executor warp");
        assert!(assemble_run_config(&args).is_err());
    }

    #[test]
    fn missing_required_app_flag_is_usage_error() {
        let args = parse_run("tapsb run --app cholesky --block 4");
        assert!(assemble_run_config(&args).is_err());
    }

    #[test]
    fn transformer_flag_sets_default_filter() {
        let args = parse_run(
            "tapsb run --app synthetic --structure bag --task-count 1 --transformer store",
        );
        let config = assemble_run_config(&args).unwrap();
        assert_eq!(
            config.transformer,
            Some(TransformerSpec::Store {
                addr: String::new()
            })
        );
        assert_eq!(config.filter, FilterSpec::MinSize { threshold: 1024 });
    }

    #[test]
    fn config_file_round_trip_with_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let args = parse_run(
            "tapsb run --app cholesky --n 32 --block 8 --executor thread-pool --workers 2 --seed 5",
        );
        let mut config = assemble_run_config(&args).unwrap();
        config.run_dir = dir.path().to_path_buf();
        let path = dir.path().join("config.json");
        std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();

        let loaded_args = parse_run(&format!(
            "tapsb run --config {} --workers 8",
            path.display()
        ));
        let loaded = assemble_run_config(&loaded_args).unwrap();
        assert_eq!(loaded.app, config.app);
        assert_eq!(loaded.executor, ExecutorSpec::ThreadPool { workers: 8 });
        assert_eq!(loaded.seed, 5);
    }

    #[test]
    fn failure_flags_build_spec() {
        let args = parse_run(
            "tapsb run --app synthetic --structure sequential --task-count 5 --failure-type exception --failure-rate 0.5",
        );
        let config = assemble_run_config(&args).unwrap();
        let failure = config.failure.unwrap();
        assert_eq!(failure.failure_type, FailureType::Exception);
        assert!((failure.rate - 0.5).abs() < 1e-12);
    }
}
