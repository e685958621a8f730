//! Pluggable task-execution backends behind one submission contract.
//!
//! Every backend implements [`Executor`]: it accepts a task whose arguments
//! are already concrete data ([`Payload`]) and returns a [`LowLevelFuture`]
//! that completes exactly once. Dataflow (future-valued arguments) is added
//! on top by [`DependencyExecutor`], which holds tasks until their parents
//! complete.

mod dependency;
pub(crate) mod ipc;
mod latency_sim;
mod serial;
mod thread_pool;
mod worker;
mod worker_pool;

pub use dependency::DependencyExecutor;
pub use latency_sim::LatencySimExecutor;
pub use serial::SerialExecutor;
pub use thread_pool::ThreadPoolExecutor;
pub use worker::run_worker;
pub use worker_pool::WorkerPoolExecutor;

use crate::future::LowLevelFuture;
use crate::task::{Payload, TaskId};
use crate::transform::{FilterSpec, TransformerSpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

/// How the execution side handles transformed data: which transformer to
/// resolve identifier arguments with, and which results to transform back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPlan {
    pub transformer: TransformerSpec,
    pub filter: FilterSpec,
}

/// A task whose arguments may still be futures of other tasks. Only
/// [`DependencyExecutor`] accepts these.
pub struct TaskRequest {
    pub id: TaskId,
    pub function: String,
    pub args: Vec<LowArg>,
    pub plan: Option<DataPlan>,
}

/// Task argument as submitted to the dependency layer. `Seq` nests one
/// level: its elements are scanned for futures, deeper structure is not.
pub enum LowArg {
    Ready(Payload),
    Future {
        task: TaskId,
        handle: LowLevelFuture,
    },
    Seq(Vec<LowArg>),
}

/// A task whose arguments are all concrete; what backends actually run.
#[derive(Debug, Clone)]
pub struct ResolvedRequest {
    pub id: TaskId,
    pub function: String,
    pub args: Vec<Payload>,
    pub plan: Option<DataPlan>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExecutorError {
    #[error("executor is stopped")]
    Stopped,
    #[error("worker pool startup failed at worker {index}: {detail}")]
    Startup { index: usize, detail: String },
    #[error("no worker with index {0}")]
    InvalidWorker(usize),
    #[error("argument serialization failed: {0}")]
    Serialization(String),
    #[error("invalid executor spec: {0}")]
    InvalidSpec(String),
}

/// One task-execution backend.
pub trait Executor: Send + Sync {
    /// Stable kind text, also logged in task records.
    fn kind(&self) -> &'static str;

    /// Degree of parallelism the backend offers.
    fn worker_count(&self) -> usize;

    fn submit(&self, request: ResolvedRequest) -> Result<LowLevelFuture, ExecutorError>;

    /// Stops the backend. With `wait`, blocks until queued and in-flight
    /// tasks are terminal; without, queued tasks complete with a
    /// worker-failure error. Idempotent.
    fn shutdown(&self, wait: bool);
}

fn default_drain_timeout() -> f64 {
    60.0
}

/// Serializable executor selection; the runtime registry of backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExecutorSpec {
    Serial,
    ThreadPool {
        workers: usize,
    },
    WorkerPool {
        workers: usize,
        /// Program spawned for each worker process; defaults to the current
        /// executable (the CLI re-invokes itself in worker mode). The
        /// `TAPSB_WORKER_BIN` environment variable overrides the default.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        worker_program: Option<PathBuf>,
        /// Seconds a draining stop waits before killing workers.
        #[serde(default = "default_drain_timeout")]
        drain_timeout_s: f64,
    },
    /// Wraps an inner executor, batching dispatch on a fixed scheduling
    /// interval and charging inline payload bytes against a simulated
    /// control-channel bandwidth, the way a remote/cloud executor would.
    LatencySim {
        sched_latency_s: f64,
        batch_size: usize,
        /// Bytes per second through the simulated control channel; `None`
        /// models an infinitely fast channel (pure scheduling latency).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        control_bandwidth: Option<u64>,
        inner: Box<ExecutorSpec>,
    },
}

impl ExecutorSpec {
    pub fn worker_pool(workers: usize) -> ExecutorSpec {
        ExecutorSpec::WorkerPool {
            workers,
            worker_program: None,
            drain_timeout_s: default_drain_timeout(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ExecutorSpec::Serial => "serial",
            ExecutorSpec::ThreadPool { .. } => "thread-pool",
            ExecutorSpec::WorkerPool { .. } => "worker-pool",
            ExecutorSpec::LatencySim { .. } => "latency-sim",
        }
    }

    pub const KIND_NAMES: [&'static str; 4] =
        ["serial", "thread-pool", "worker-pool", "latency-sim"];

    pub fn workers(&self) -> usize {
        match self {
            ExecutorSpec::Serial => 1,
            ExecutorSpec::ThreadPool { workers } | ExecutorSpec::WorkerPool { workers, .. } => {
                *workers
            }
            ExecutorSpec::LatencySim { inner, .. } => inner.workers(),
        }
    }

    pub fn validate(&self) -> Result<(), ExecutorError> {
        match self {
            ExecutorSpec::Serial => Ok(()),
            ExecutorSpec::ThreadPool { workers } | ExecutorSpec::WorkerPool { workers, .. } => {
                if *workers == 0 {
                    return Err(ExecutorError::InvalidSpec(
                        "pool executors need workers >= 1".into(),
                    ));
                }
                Ok(())
            }
            ExecutorSpec::LatencySim {
                sched_latency_s,
                batch_size,
                inner,
                ..
            } => {
                if !sched_latency_s.is_finite() || *sched_latency_s < 0.0 {
                    return Err(ExecutorError::InvalidSpec(
                        "sched-latency must be >= 0".into(),
                    ));
                }
                if *batch_size == 0 {
                    return Err(ExecutorError::InvalidSpec("batch-size must be >= 1".into()));
                }
                if matches!(inner.as_ref(), ExecutorSpec::LatencySim { .. }) {
                    return Err(ExecutorError::InvalidSpec(
                        "latency-sim cannot nest latency-sim".into(),
                    ));
                }
                inner.validate()
            }
        }
    }

    /// Builds and starts the backend. Worker pools spawn their processes
    /// here, so construction cost is part of any makespan measured around
    /// this call.
    pub fn build(&self) -> Result<Arc<dyn Executor>, ExecutorError> {
        self.validate()?;
        Ok(match self {
            ExecutorSpec::Serial => Arc::new(SerialExecutor::new()),
            ExecutorSpec::ThreadPool { workers } => Arc::new(ThreadPoolExecutor::start(*workers)),
            ExecutorSpec::WorkerPool {
                workers,
                worker_program,
                drain_timeout_s,
            } => Arc::new(WorkerPoolExecutor::start(
                *workers,
                worker_program.clone(),
                Duration::from_secs_f64(*drain_timeout_s),
            )?),
            ExecutorSpec::LatencySim {
                sched_latency_s,
                batch_size,
                control_bandwidth,
                inner,
            } => Arc::new(LatencySimExecutor::start(
                Duration::from_secs_f64(*sched_latency_s),
                *batch_size,
                *control_bandwidth,
                inner.build()?,
            )),
        })
    }
}
