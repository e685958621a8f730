//! The unified task-submission interface.
//!
//! An engine composes four components: an executor (wrapped for implicit
//! dataflow), an optional data transformer with its filter, and a record
//! sink. Submitting a task assigns it a fresh id, turns future-valued
//! arguments into dependencies, externalizes large values through the
//! transformer, hands the task to the executor, and arranges for exactly
//! one task record to reach the sink when the task completes.

use crate::executor::{
    DataPlan, DependencyExecutor, Executor, ExecutorError, ExecutorSpec, LowArg, TaskRequest,
};
use crate::future::{LowLevelFuture, TaskOutcome, TaskState};
use crate::record::{JsonlSink, RecordSink, TaskRecord, TaskStatus};
use crate::registry::TaskRegistry;
use crate::rng::SeededRng;
use crate::task::{epoch_micros, Payload, TaskError, TaskId};
use crate::transform::{FilterSpec, TransformError, Transformer, TransformerSpec};
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

/// A task argument as the client hands it over: an inline value, a future
/// of an earlier task, or a sequence of either. Future detection covers
/// the top level and one level of sequence nesting; futures buried deeper
/// are serialized inline as their task-id text, undetected by design.
pub enum TaskInput {
    Value(Value),
    Future(TaskFuture),
    Seq(Vec<TaskInput>),
}

impl TaskInput {
    pub fn int(v: i64) -> TaskInput {
        TaskInput::Value(Value::Int(v))
    }

    pub fn float(v: f64) -> TaskInput {
        TaskInput::Value(Value::Float(v))
    }

    pub fn text(v: impl Into<String>) -> TaskInput {
        TaskInput::Value(Value::Text(v.into()))
    }

    pub fn bytes(v: impl Into<Vec<u8>>) -> TaskInput {
        TaskInput::Value(Value::Bytes(v.into()))
    }

    pub fn future(f: &TaskFuture) -> TaskInput {
        TaskInput::Future(f.clone())
    }

    /// Inline conversion for values below the future-detection horizon.
    fn into_deep_value(self) -> Value {
        match self {
            TaskInput::Value(v) => v,
            TaskInput::Future(f) => Value::Text(f.task_id().to_string()),
            TaskInput::Seq(items) => {
                Value::List(items.into_iter().map(TaskInput::into_deep_value).collect())
            }
        }
    }
}

impl From<Value> for TaskInput {
    fn from(v: Value) -> TaskInput {
        TaskInput::Value(v)
    }
}

impl From<&TaskFuture> for TaskInput {
    fn from(f: &TaskFuture) -> TaskInput {
        TaskInput::Future(f.clone())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown task function {0:?}")]
    UnknownFunction(String),
    #[error("engine is shut down")]
    ShutDown,
    #[error("argument transform failed: {0}")]
    Transform(#[from] TransformError),
    #[error("executor rejected submission: {0}")]
    Executor(#[from] ExecutorError),
    #[error("engine spec invalid: {0}")]
    InvalidSpec(String),
}

/// Error returned when retrieving a task's result.
#[derive(Debug, thiserror::Error)]
pub enum WaitError {
    #[error("timed out waiting for task result")]
    Timeout,
    #[error(transparent)]
    Task(TaskError),
    #[error("result resolution failed: {0}")]
    Resolve(TransformError),
}

/// Waitable handle to a task's eventual result.
#[derive(Clone)]
pub struct TaskFuture {
    id: TaskId,
    low: LowLevelFuture,
    transformer: Option<Arc<dyn Transformer>>,
}

impl std::fmt::Debug for TaskFuture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaskFuture")
            .field("id", &self.id)
            .field("state", &self.state())
            .finish()
    }
}

impl TaskFuture {
    pub fn task_id(&self) -> TaskId {
        self.id
    }

    pub fn state(&self) -> TaskState {
        self.low.state()
    }

    /// Blocks until the task is terminal (or `timeout` elapses) and returns
    /// its result. Transformed results are resolved back through the
    /// engine's transformer. Repeated calls return the same outcome.
    pub fn result(&self, timeout: Option<Duration>) -> Result<Value, WaitError> {
        let outcome = self.low.wait(timeout).ok_or(WaitError::Timeout)?;
        match &outcome.result {
            Err(error) => Err(WaitError::Task(error.clone())),
            Ok(Payload::Value(v)) => Ok(v.clone()),
            Ok(Payload::Ident(ident)) => {
                let transformer = self.transformer.as_ref().ok_or_else(|| {
                    WaitError::Resolve(TransformError::Resolve {
                        locator: ident.locator.clone(),
                        detail: "engine has no transformer".to_owned(),
                    })
                })?;
                transformer.resolve(ident).map_err(WaitError::Resolve)
            }
            Ok(Payload::Seq(_)) => Err(WaitError::Task(TaskError::Application(
                "task produced a sequence payload".to_owned(),
            ))),
        }
    }

    /// Runs `callback` once the task is terminal (immediately if it already
    /// is). The callback sees the raw outcome, before result resolution.
    pub fn when_done(&self, callback: impl FnOnce(&Arc<TaskOutcome>) + Send + 'static) {
        self.low.on_complete(callback);
    }

    pub(crate) fn low_handle(&self) -> &LowLevelFuture {
        &self.low
    }
}

/// Anything an application can submit tasks through: the engine itself, or
/// an interception layer wrapped around it.
pub trait TaskSpawner: Send + Sync {
    fn submit(&self, function: &str, args: Vec<TaskInput>) -> Result<TaskFuture, EngineError>;

    fn map(
        &self,
        function: &str,
        inputs: Vec<Vec<TaskInput>>,
    ) -> Result<Vec<TaskFuture>, EngineError> {
        inputs
            .into_iter()
            .map(|args| self.submit(function, args))
            .collect()
    }

    /// Degree of parallelism offered by the backing executor.
    fn worker_count(&self) -> usize;
}

/// Serializable description of a full engine: the four components.
///
/// When `transformer` is none the filter must be the never-match filter;
/// there is nothing to apply a match to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub executor: ExecutorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformer: Option<TransformerSpec>,
    #[serde(default)]
    pub filter: FilterSpec,
    /// Task records go to this file; `None` keeps them in memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_path: Option<PathBuf>,
    /// Seeds the engine's task-id stream, making runs reproducible.
    #[serde(default)]
    pub seed: u64,
}

impl EngineSpec {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.transformer.is_none() && self.filter != FilterSpec::Never {
            return Err(EngineError::InvalidSpec(
                "a filter other than `never` needs a transformer".to_owned(),
            ));
        }
        self.executor.validate()?;
        Ok(())
    }
}

struct Inflight {
    count: Mutex<u64>,
    idle: Condvar,
}

struct IdGen {
    rng: SeededRng,
    issued: HashSet<u128>,
}

pub struct Engine {
    executor: DependencyExecutor,
    executor_kind: &'static str,
    transformer: Option<Arc<dyn Transformer>>,
    transformer_spec: Option<TransformerSpec>,
    filter: FilterSpec,
    sink: Arc<dyn RecordSink>,
    registry: Arc<TaskRegistry>,
    ids: Mutex<IdGen>,
    inflight: Arc<Inflight>,
    shut_down: AtomicBool,
    sink_errors: Arc<AtomicU64>,
}

impl Engine {
    pub fn builder() -> EngineBuilder {
        EngineBuilder::default()
    }

    /// Builds an engine from its serializable spec. The executor is
    /// constructed (and its workers started) here.
    pub fn from_spec(spec: &EngineSpec) -> Result<Engine, EngineError> {
        spec.validate()?;
        let mut builder = Engine::builder()
            .executor(spec.executor.build()?)
            .seed(spec.seed)
            .filter(spec.filter.clone());
        if let Some(tspec) = &spec.transformer {
            builder = builder.transformer(tspec.build()?, tspec.clone());
        }
        if let Some(path) = &spec.record_path {
            let sink =
                JsonlSink::create(path).map_err(|e| EngineError::InvalidSpec(e.to_string()))?;
            builder = builder.sink(Arc::new(sink));
        }
        builder.build()
    }

    pub fn executor_kind(&self) -> &'static str {
        self.executor_kind
    }

    pub fn shutdown(&self, wait: bool) {
        if self.shut_down.swap(true, Ordering::SeqCst) {
            if wait {
                self.wait_idle();
                self.executor.shutdown(true);
                let _ = self.sink.flush();
            }
            return;
        }
        if wait {
            self.wait_idle();
        }
        self.executor.shutdown(wait);
        let _ = self.sink.flush();
    }

    fn wait_idle(&self) {
        let mut count = self.inflight.count.lock().unwrap();
        while *count > 0 {
            count = self.inflight.idle.wait(count).unwrap();
        }
    }

    pub fn sink_error_count(&self) -> u64 {
        self.sink_errors.load(Ordering::SeqCst)
    }

    fn fresh_id(&self) -> TaskId {
        let mut ids = self.ids.lock().unwrap();
        loop {
            let raw = ids.rng.next_u128();
            if ids.issued.insert(raw) {
                return TaskId::from_u128(raw);
            }
        }
    }

    fn classify_args(
        &self,
        args: Vec<TaskInput>,
        parents: &mut Vec<TaskId>,
        seen: &mut HashSet<TaskId>,
        transform_args_us: &mut u64,
        arg_bytes: &mut u64,
        depth: usize,
    ) -> Result<Vec<LowArg>, EngineError> {
        let mut low_args = Vec::with_capacity(args.len());
        for input in args {
            low_args.push(match input {
                TaskInput::Future(f) => {
                    if seen.insert(f.task_id()) {
                        parents.push(f.task_id());
                    }
                    LowArg::Future {
                        task: f.task_id(),
                        handle: f.low_handle().clone(),
                    }
                }
                TaskInput::Value(v) => {
                    let payload = self.externalize(v, transform_args_us)?;
                    *arg_bytes += payload.byte_size();
                    LowArg::Ready(payload)
                }
                TaskInput::Seq(items) => {
                    if depth == 0 {
                        let nested = self.classify_args(
                            items,
                            parents,
                            seen,
                            transform_args_us,
                            arg_bytes,
                            depth + 1,
                        )?;
                        LowArg::Seq(nested)
                    } else {
                        // Beyond the detection horizon: plain inline data.
                        let v = TaskInput::Seq(items).into_deep_value();
                        *arg_bytes += v.frame_len();
                        LowArg::Ready(Payload::Value(v))
                    }
                }
            });
        }
        Ok(low_args)
    }

    /// Applies the filter/transformer pair to one inline value.
    fn externalize(
        &self,
        value: Value,
        transform_args_us: &mut u64,
    ) -> Result<Payload, EngineError> {
        match &self.transformer {
            Some(transformer) if self.filter.check(&value) => {
                let started = Instant::now();
                let ident = transformer.transform(&value)?;
                *transform_args_us += started.elapsed().as_micros() as u64;
                Ok(Payload::Ident(ident))
            }
            _ => Ok(Payload::Value(value)),
        }
    }
}

impl TaskSpawner for Engine {
    fn submit(&self, function: &str, args: Vec<TaskInput>) -> Result<TaskFuture, EngineError> {
        if self.shut_down.load(Ordering::SeqCst) {
            return Err(EngineError::ShutDown);
        }
        if !self.registry.contains(function) {
            return Err(EngineError::UnknownFunction(function.to_owned()));
        }

        let id = self.fresh_id();
        let submitted_at = epoch_micros();
        let mut parents = Vec::new();
        let mut seen = HashSet::new();
        let mut transform_args_us = 0u64;
        let mut arg_bytes = 0u64;
        let low_args = self.classify_args(
            args,
            &mut parents,
            &mut seen,
            &mut transform_args_us,
            &mut arg_bytes,
            0,
        )?;

        let plan = self.transformer.as_ref().map(|_| DataPlan {
            transformer: self
                .transformer_spec
                .clone()
                .expect("transformer spec recorded alongside transformer"),
            filter: self.filter.clone(),
        });

        {
            let mut count = self.inflight.count.lock().unwrap();
            *count += 1;
        }

        let request = TaskRequest {
            id,
            function: function.to_owned(),
            args: low_args,
            plan,
        };
        let low = match self.executor.submit(request) {
            Ok(low) => low,
            Err(e) => {
                let mut count = self.inflight.count.lock().unwrap();
                *count -= 1;
                self.inflight.idle.notify_all();
                return Err(EngineError::Executor(e));
            }
        };

        // Completion callback: emit exactly one record, then retire the
        // in-flight slot.
        let sink = Arc::clone(&self.sink);
        let sink_errors = Arc::clone(&self.sink_errors);
        let inflight = Arc::clone(&self.inflight);
        let executor_kind = self.executor_kind;
        let function_name = function.to_owned();
        let parent_texts: Vec<String> = parents.iter().map(TaskId::to_string).collect();
        low.on_complete(move |outcome| {
            let completed_at = epoch_micros();
            let (status, error_kind, result_bytes) = match &outcome.result {
                Ok(payload) => (TaskStatus::Succeeded, String::new(), payload.byte_size()),
                Err(error) => (TaskStatus::Failed, error.kind().to_owned(), 0),
            };
            let record = TaskRecord {
                task_id: id.to_string(),
                function: function_name,
                parents: parent_texts,
                submitted_at,
                completed_at,
                exec_started_at: outcome.report.exec_started_at,
                exec_ended_at: outcome.report.exec_ended_at,
                transform_args_us,
                resolve_args_us: outcome.report.resolve_args_us,
                transform_result_us: outcome.report.transform_result_us,
                makespan_us: completed_at.saturating_sub(submitted_at),
                status,
                error_kind,
                executor: executor_kind.to_owned(),
                arg_bytes,
                result_bytes,
            };
            if sink.log(&record).is_err() {
                sink_errors.fetch_add(1, Ordering::SeqCst);
            }
            let mut count = inflight.count.lock().unwrap();
            *count -= 1;
            inflight.idle.notify_all();
        });

        Ok(TaskFuture {
            id,
            low,
            transformer: self.transformer.clone(),
        })
    }

    fn worker_count(&self) -> usize {
        self.executor.worker_count()
    }
}

#[derive(Default)]
pub struct EngineBuilder {
    executor: Option<Arc<dyn Executor>>,
    transformer: Option<(Arc<dyn Transformer>, TransformerSpec)>,
    filter: FilterSpec,
    sink: Option<Arc<dyn RecordSink>>,
    registry: Option<Arc<TaskRegistry>>,
    seed: Option<u64>,
}

impl EngineBuilder {
    pub fn executor(mut self, executor: Arc<dyn Executor>) -> Self {
        self.executor = Some(executor);
        self
    }

    pub fn transformer(mut self, transformer: Arc<dyn Transformer>, spec: TransformerSpec) -> Self {
        self.transformer = Some((transformer, spec));
        self
    }

    pub fn filter(mut self, filter: FilterSpec) -> Self {
        self.filter = filter;
        self
    }

    pub fn sink(mut self, sink: Arc<dyn RecordSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn registry(mut self, registry: Arc<TaskRegistry>) -> Self {
        self.registry = Some(registry);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn build(self) -> Result<Engine, EngineError> {
        let executor = self
            .executor
            .ok_or_else(|| EngineError::InvalidSpec("an executor is required".into()))?;
        if self.transformer.is_none() && self.filter != FilterSpec::Never {
            return Err(EngineError::InvalidSpec(
                "a filter other than `never` needs a transformer".to_owned(),
            ));
        }
        let (transformer, transformer_spec) = match self.transformer {
            Some((t, spec)) => (Some(t), Some(spec)),
            None => (None, None),
        };
        let seed = self.seed.unwrap_or_else(rand::random);
        let executor_kind = executor.kind();
        Ok(Engine {
            executor: DependencyExecutor::wrap(executor),
            executor_kind,
            transformer,
            transformer_spec,
            filter: self.filter,
            sink: self
                .sink
                .unwrap_or_else(|| Arc::new(crate::record::MemorySink::new())),
            registry: self
                .registry
                .unwrap_or_else(|| Arc::clone(TaskRegistry::builtin())),
            ids: Mutex::new(IdGen {
                rng: SeededRng::derive(seed, "task-ids"),
                issued: HashSet::new(),
            }),
            inflight: Arc::new(Inflight {
                count: Mutex::new(0),
                idle: Condvar::new(),
            }),
            shut_down: AtomicBool::new(false),
            sink_errors: Arc::new(AtomicU64::new(0)),
        })
    }
}
