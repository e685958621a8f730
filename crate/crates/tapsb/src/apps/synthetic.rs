//! Synthetic workloads: no-op sleep tasks arranged as one of four DAG
//! structures, with configurable task input/output payload sizes.

use super::{App, AppError, AppSummary, RunContext};
use crate::engine::{TaskFuture, TaskInput, TaskSpawner};
use crate::registry::{arg, float_arg, int_arg, TaskRegistry};
use crate::rng::SeededRng;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::time::Duration;

pub const SLEEP_NOOP_TASK: &str = "sleep_noop";

/// Sleeps, ignores the input data, and returns `output_bytes` of
/// deterministic pseudo-random bytes.
pub fn sleep_noop(sleep_s: f64, output_bytes: usize) -> Vec<u8> {
    if sleep_s > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(sleep_s));
    }
    SeededRng::derive(output_bytes as u64, "sleep-noop-output").bytes(output_bytes)
}

pub(crate) fn register_tasks(registry: &mut TaskRegistry) {
    registry.register(SLEEP_NOOP_TASK, |args| {
        let _data = arg(args, 0)?; // shape-agnostic, content ignored
        let sleep_s = float_arg(args, 1)?;
        let output_bytes = int_arg(args, 2)?.max(0) as usize;
        Ok(Value::Bytes(sleep_noop(sleep_s, output_bytes)))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// Chain of `task_count` tasks, each feeding the next.
    Sequential,
    /// `task_count` independent leaves feeding one sink.
    Reduce,
    /// `task_count` independent tasks, submitted with a bounded window and
    /// one-for-one replenishment.
    Bag,
    /// One source, `task_count` middle tasks, one sink.
    Diamond,
}

impl Structure {
    pub const NAMES: [&'static str; 4] = ["sequential", "reduce", "bag", "diamond"];

    pub fn parse(text: &str) -> Option<Structure> {
        match text {
            "sequential" => Some(Structure::Sequential),
            "reduce" => Some(Structure::Reduce),
            "bag" => Some(Structure::Bag),
            "diamond" => Some(Structure::Diamond),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub structure: Structure,
    /// Chain length / leaf count / bag size / diamond width.
    pub task_count: usize,
    #[serde(default)]
    pub input_bytes: usize,
    #[serde(default)]
    pub output_bytes: usize,
    /// Per-task sleep, seconds.
    #[serde(default)]
    pub sleep_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Bag mode: maximum outstanding tasks; defaults to the executor's
    /// worker count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), AppError> {
        if self.task_count < 1 {
            return Err(AppError::InvalidConfig(
                "synthetic needs task_count >= 1".into(),
            ));
        }
        if !self.sleep_s.is_finite() || self.sleep_s < 0.0 {
            return Err(AppError::InvalidConfig("sleep must be >= 0".into()));
        }
        Ok(())
    }

    pub fn analytic_task_count(&self) -> u64 {
        let n = self.task_count as u64;
        match self.structure {
            Structure::Sequential | Structure::Bag => n,
            Structure::Reduce => n + 1,
            Structure::Diamond => n + 2,
        }
    }
}

pub struct SyntheticOutcome {
    pub futures: Vec<TaskFuture>,
    pub failed: usize,
    pub first_error: Option<crate::engine::WaitError>,
}

/// Builds and runs the configured DAG, waiting for every task. The whole
/// structure is always submitted; the first task failure is reported after
/// the run drains so telemetry covers every task.
pub fn run_synthetic(
    spawner: &dyn TaskSpawner,
    config: &SyntheticConfig,
) -> Result<SyntheticOutcome, AppError> {
    config.validate()?;
    let mut input_rng = SeededRng::derive(config.seed, "synthetic-input");
    let fresh_input =
        |rng: &mut SeededRng| TaskInput::Value(Value::Bytes(rng.bytes(config.input_bytes)));
    let task_args = |data: TaskInput, config: &SyntheticConfig| {
        vec![
            data,
            TaskInput::float(config.sleep_s),
            TaskInput::int(config.output_bytes as i64),
        ]
    };

    let mut futures: Vec<TaskFuture> = Vec::new();
    match config.structure {
        Structure::Sequential => {
            let mut previous: Option<TaskFuture> = None;
            for _ in 0..config.task_count {
                let data = match &previous {
                    None => fresh_input(&mut input_rng),
                    Some(prev) => TaskInput::future(prev),
                };
                let f = spawner.submit(SLEEP_NOOP_TASK, task_args(data, config))?;
                previous = Some(f.clone());
                futures.push(f);
            }
        }
        Structure::Reduce => {
            let leaves: Vec<TaskFuture> = (0..config.task_count)
                .map(|_| {
                    spawner.submit(
                        SLEEP_NOOP_TASK,
                        task_args(fresh_input(&mut input_rng), config),
                    )
                })
                .collect::<Result<_, _>>()?;
            let sink_data = TaskInput::Seq(leaves.iter().map(TaskInput::future).collect());
            let sink = spawner.submit(SLEEP_NOOP_TASK, task_args(sink_data, config))?;
            futures.extend(leaves);
            futures.push(sink);
        }
        Structure::Bag => {
            let window = config
                .window
                .unwrap_or_else(|| spawner.worker_count())
                .max(1);
            let (done_tx, done_rx) = crossbeam_channel::unbounded::<()>();
            let mut outstanding = 0usize;
            for _ in 0..config.task_count {
                if outstanding >= window {
                    done_rx
                        .recv()
                        .expect("completion notifications outlive the run");
                    outstanding -= 1;
                }
                let f = spawner.submit(
                    SLEEP_NOOP_TASK,
                    task_args(fresh_input(&mut input_rng), config),
                )?;
                let tx = done_tx.clone();
                f.when_done(move |_| {
                    let _ = tx.send(());
                });
                futures.push(f);
                outstanding += 1;
            }
        }
        Structure::Diamond => {
            let source = spawner.submit(
                SLEEP_NOOP_TASK,
                task_args(fresh_input(&mut input_rng), config),
            )?;
            let middles: Vec<TaskFuture> = (0..config.task_count)
                .map(|_| {
                    spawner.submit(
                        SLEEP_NOOP_TASK,
                        task_args(TaskInput::future(&source), config),
                    )
                })
                .collect::<Result<_, _>>()?;
            let sink_data = TaskInput::Seq(middles.iter().map(TaskInput::future).collect());
            let sink = spawner.submit(SLEEP_NOOP_TASK, task_args(sink_data, config))?;
            futures.push(source);
            futures.extend(middles);
            futures.push(sink);
        }
    }

    let mut failed = 0usize;
    let mut first_error = None;
    for future in &futures {
        if let Err(e) = future.result(None) {
            failed += 1;
            if first_error.is_none() {
                first_error = Some(e);
            }
        }
    }
    Ok(SyntheticOutcome {
        futures,
        failed,
        first_error,
    })
}

pub struct SyntheticApp {
    config: SyntheticConfig,
}

impl SyntheticApp {
    pub fn new(config: SyntheticConfig) -> SyntheticApp {
        SyntheticApp { config }
    }
}

impl App for SyntheticApp {
    fn run(
        &mut self,
        spawner: &dyn TaskSpawner,
        ctx: &mut RunContext,
    ) -> Result<AppSummary, AppError> {
        ctx.log(format!(
            "synthetic structure={:?} task_count={} input={}B output={}B sleep={}s",
            self.config.structure,
            self.config.task_count,
            self.config.input_bytes,
            self.config.output_bytes,
            self.config.sleep_s
        ));
        let started = std::time::Instant::now();
        let outcome = run_synthetic(spawner, &self.config)?;
        let elapsed = started.elapsed();
        ctx.log(format!(
            "synthetic done: {} tasks, {} failed",
            outcome.futures.len(),
            outcome.failed
        ));
        let mut summary = AppSummary::new();
        summary.insert(
            "structure".into(),
            format!("{:?}", self.config.structure).to_lowercase().into(),
        );
        summary.insert("task_count".into(), (outcome.futures.len() as u64).into());
        summary.insert("failed_tasks".into(), (outcome.failed as u64).into());
        summary.insert("app_seconds".into(), elapsed.as_secs_f64().into());
        summary.insert(
            "tasks_per_second".into(),
            (outcome.futures.len() as f64 / elapsed.as_secs_f64().max(1e-9)).into(),
        );
        if let Some(error) = outcome.first_error {
            summary.insert("first_error".into(), error.to_string().into());
            return Err(AppError::Wait(error));
        }
        Ok(summary)
    }
}
