//! Benchmarking framework for task-based execution.
//!
//! Applications are written once against the [`engine::Engine`] interface
//! and run over pluggable task executors and data-management plugins, with
//! per-task telemetry for makespan, scaling, and data-transfer studies.
//!
//! The moving parts, each selectable by name at runtime:
//!
//! - [`executor`]: serial, thread-pool, multi-process worker-pool, and a
//!   latency-simulated remote executor, all behind one [`executor::Executor`]
//!   contract, with [`executor::DependencyExecutor`] adding implicit
//!   dataflow on top.
//! - [`transform`]: filters decide which task data leave the message;
//!   file and TCP key-value store transformers move them out and back.
//! - [`record`]: one JSON line of telemetry per task.
//! - [`apps`]: tiled Cholesky factorization, word-count MapReduce,
//!   synthetic DAGs, and a failure-injection wrapper.
//! - [`harness`]: the CLI, run directories, and the benchmark drivers.

pub mod apps;
pub mod engine;
pub mod executor;
pub mod future;
pub mod harness;
pub mod record;
pub mod registry;
pub mod rng;
pub mod runner;
pub mod task;
pub mod transform;
pub mod value;

pub use engine::{Engine, EngineError, EngineSpec, TaskFuture, TaskInput, TaskSpawner, WaitError};
pub use executor::{Executor, ExecutorSpec};
pub use record::{load_records, JsonlSink, MemorySink, RecordSink, TaskRecord, TaskStatus};
pub use registry::TaskRegistry;
pub use task::{TaskError, TaskId};
pub use transform::{FilterSpec, Identifier, Transformer, TransformerSpec};
pub use value::Value;
