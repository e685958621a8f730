//! Run orchestration: configuration, run directories, and benchmark
//! drivers.

pub mod bench;
pub mod cli;
pub mod report;

use crate::apps::failures::{FailureInjector, FailureSpec, FailureType};
use crate::apps::{AppError, AppSpec, RunContext};
use crate::engine::{Engine, EngineError, EngineSpec};
use crate::executor::ExecutorSpec;
use crate::record::RecordError;
use crate::transform::{FilterSpec, StoreService, TransformerSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

/// Environment variable supplying the default parent run directory.
pub const RUN_DIR_ENV: &str = "TAPSB_RUN_DIR";

/// Full, serializable record of one benchmark invocation. Round-trips
/// losslessly through `config.json`, so a saved config reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub app: AppSpec,
    pub executor: ExecutorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformer: Option<TransformerSpec>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureSpec>,
    /// Parent directory; each run creates a fresh subdirectory inside.
    pub run_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("record error: {0}")]
    Record(#[from] RecordError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.app
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.executor
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        if self.transformer.is_none() && self.filter != FilterSpec::Never {
            return Err(HarnessError::InvalidConfig(
                "a filter other than `never` needs a transformer".to_owned(),
            ));
        }
        if let Some(failure) = &self.failure {
            failure.validate().map_err(HarnessError::InvalidConfig)?;
            if failure.failure_type == FailureType::WorkerKill
                && !matches!(self.executor, ExecutorSpec::WorkerPool { .. })
            {
                return Err(HarnessError::InvalidConfig(
                    "worker-kill failures need the worker-pool executor".to_owned(),
                ));
            }
        }
        Ok(())
    }
}

/// Everything a completed run left behind.
#[derive(Debug)]
pub struct RunOutput {
    /// The run's own fresh directory.
    pub run_dir: PathBuf,
    pub summary: serde_json::Value,
    /// Executor construction through engine shutdown.
    pub makespan: Duration,
    pub record_count: usize,
    /// The app's error, when it failed; artifacts are still on disk.
    pub app_error: Option<String>,
}

impl RunOutput {
    pub fn records_path(&self) -> PathBuf {
        self.run_dir.join("tasks.jsonl")
    }
}

/// Creates `<parent>/<app>-<timestamp>-<suffix>/`, never reusing an
/// existing directory.
fn create_run_dir(parent: &Path, app_name: &str) -> std::io::Result<PathBuf> {
    fs::create_dir_all(parent)?;
    loop {
        let stamp = crate::task::epoch_micros();
        let suffix: u32 = rand::random::<u32>() & 0xffff;
        let candidate = parent.join(format!("{app_name}-{stamp}-{suffix:04x}"));
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Executes one configured run end to end: fresh run directory,
/// `config.json`, engine construction, the app, shutdown, `summary.json`.
///
/// The app failing is not a harness error: artifacts (including every task
/// record) are still written, the failure lands in `summary.json`, and the
/// output carries the message.
pub fn execute_run(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let run_dir = create_run_dir(&config.run_dir, config.app.name())?;
    fs::write(
        run_dir.join("config.json"),
        serde_json::to_string_pretty(config).unwrap(),
    )?;

    // A store transformer with the empty address is served in-process for
    // the duration of the run.
    let mut embedded_store: Option<StoreService> = None;
    let transformer = match &config.transformer {
        Some(TransformerSpec::Store { addr }) if addr.is_empty() => {
            let service = StoreService::bind("127.0.0.1:0").map_err(|e| {
                HarnessError::InvalidConfig(format!("cannot start embedded store: {e}"))
            })?;
            let spec = TransformerSpec::Store {
                addr: service.addr().to_owned(),
            };
            embedded_store = Some(service);
            Some(spec)
        }
        Some(TransformerSpec::File { dir }) if dir.as_os_str().is_empty() => {
            Some(TransformerSpec::File {
                dir: run_dir.join("data"),
            })
        }
        other => other.clone(),
    };

    let records_path = run_dir.join("tasks.jsonl");
    let started = Instant::now();
    let engine_spec = EngineSpec {
        executor: config.executor.clone(),
        transformer,
        filter: config.filter.clone(),
        record_path: Some(records_path.clone()),
        seed: config.seed,
    };
    let engine = Engine::from_spec(&engine_spec)?;

    let mut ctx = RunContext::new(&run_dir)?;
    ctx.log(format!(
        "run start: app={} executor={}",
        config.app.name(),
        config.executor.kind_name()
    ));
    let mut app = config.app.build();
    let app_result = match &config.failure {
        Some(failure) => {
            let injector = FailureInjector::wrap(&engine, failure.clone());
            app.run(&injector, &mut ctx)
        }
        None => app.run(&engine, &mut ctx),
    };
    engine.shutdown(true);
    let makespan = started.elapsed();
    drop(embedded_store);

    let (mut summary_fields, app_error) = match app_result {
        Ok(fields) => (fields, None),
        Err(e) => (Default::default(), Some(e.to_string())),
    };
    ctx.log(format!(
        "run end: makespan={:.6}s app_error={:?}",
        makespan.as_secs_f64(),
        app_error
    ));

    let record_count = crate::record::load_records(&records_path)
        .map(|r| r.len())
        .unwrap_or(0);
    summary_fields.insert("app".into(), config.app.name().into());
    summary_fields.insert("executor".into(), config.executor.kind_name().into());
    summary_fields.insert("seed".into(), config.seed.into());
    summary_fields.insert("makespan_s".into(), makespan.as_secs_f64().into());
    summary_fields.insert("record_count".into(), (record_count as u64).into());
    if let Some(error) = &app_error {
        summary_fields.insert("error".into(), error.clone().into());
    }
    let summary = json!(summary_fields);
    fs::write(
        run_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).unwrap(),
    )?;

    Ok(RunOutput {
        run_dir,
        summary,
        makespan,
        record_count,
        app_error,
    })
}

/// Convenience used by benchmarks: a run that must succeed.
pub fn execute_run_ok(config: &RunConfig) -> Result<RunOutput, HarnessError> {
    let output = execute_run(config)?;
    match &output.app_error {
        Some(error) => Err(HarnessError::App(AppError::Other(error.clone()))),
        None => Ok(output),
    }
}
