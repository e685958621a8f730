//! Reference applications, registered by name and built from serializable
//! configs.

pub mod cholesky;
pub mod failures;
pub mod mapreduce;
pub mod synthetic;

use crate::engine::{EngineError, TaskSpawner, WaitError};
use serde::{Deserialize, Serialize};
use serde_json::Map;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("submission failed: {0}")]
    Engine(#[from] EngineError),
    #[error("task failed: {0}")]
    Wait(#[from] WaitError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid app config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Other(String),
}

/// Key/value fields an app contributes to `summary.json`.
pub type AppSummary = Map<String, serde_json::Value>;

/// One reference application. `run` submits every task through the given
/// spawner and blocks until the application's own outputs are complete.
pub trait App: Send {
    fn run(
        &mut self,
        spawner: &dyn TaskSpawner,
        ctx: &mut RunContext,
    ) -> Result<AppSummary, AppError>;
}

/// Per-invocation context: the unique run directory and the app log.
pub struct RunContext {
    run_dir: PathBuf,
    log: Option<Mutex<BufWriter<File>>>,
}

impl RunContext {
    /// Context rooted at `run_dir`, logging to `app.log` inside it.
    pub fn new(run_dir: impl Into<PathBuf>) -> Result<RunContext, AppError> {
        let run_dir = run_dir.into();
        let file = File::create(run_dir.join("app.log"))?;
        Ok(RunContext {
            run_dir,
            log: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    /// Context without a log file, for tests that only need a directory.
    pub fn detached(run_dir: impl Into<PathBuf>) -> RunContext {
        RunContext {
            run_dir: run_dir.into(),
            log: None,
        }
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn log(&self, line: impl AsRef<str>) {
        if let Some(log) = &self.log {
            let mut writer = log.lock().unwrap();
            let _ = writeln!(writer, "{} {}", crate::task::epoch_micros(), line.as_ref());
            let _ = writer.flush();
        }
    }
}

/// Application selection plus its parameters; the name doubles as the CLI
/// `--app` choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum AppSpec {
    Cholesky(cholesky::CholeskyConfig),
    Mapreduce(mapreduce::MapReduceConfig),
    Synthetic(synthetic::SyntheticConfig),
}

impl AppSpec {
    pub const NAMES: [&'static str; 3] = ["cholesky", "mapreduce", "synthetic"];

    pub fn name(&self) -> &'static str {
        match self {
            AppSpec::Cholesky(_) => "cholesky",
            AppSpec::Mapreduce(_) => "mapreduce",
            AppSpec::Synthetic(_) => "synthetic",
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        match self {
            AppSpec::Cholesky(cfg) => cfg.validate(),
            AppSpec::Mapreduce(cfg) => cfg.validate(),
            AppSpec::Synthetic(cfg) => cfg.validate(),
        }
    }

    pub fn build(&self) -> Box<dyn App> {
        match self {
            AppSpec::Cholesky(cfg) => Box::new(cholesky::CholeskyApp::new(cfg.clone())),
            AppSpec::Mapreduce(cfg) => Box::new(mapreduce::MapReduceApp::new(cfg.clone())),
            AppSpec::Synthetic(cfg) => Box::new(synthetic::SyntheticApp::new(cfg.clone())),
        }
    }

    /// Closed-form task count, where the application has one.
    pub fn analytic_task_count(&self) -> Option<u64> {
        match self {
            AppSpec::Cholesky(cfg) => Some(cholesky::expected_task_count(cfg.tile_count())),
            AppSpec::Mapreduce(cfg) => Some(cfg.map_tasks + 1),
            AppSpec::Synthetic(cfg) => Some(cfg.analytic_task_count()),
        }
    }
}
