//! Failure injection: an interception layer between an application and the
//! engine that makes individual tasks fail in configurable ways.
//!
//! The injection decision for each task is a pure function of the seed and
//! the task's submission ordinal, so a failure set replays exactly. Rate 0
//! passes every submission through untouched.

use crate::engine::{EngineError, TaskFuture, TaskInput, TaskSpawner};
use crate::registry::{int_arg, TaskRegistry};
use crate::rng::mix64;
use crate::task::TaskError;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureType {
    /// The task raises a deterministic application error.
    Exception,
    /// The task evaluates an actual integer division whose divisor is zero.
    DivideByZero,
    /// The task allocates a bounded amount of memory, then fails.
    Memory,
    /// The task sleeps past a per-task deadline, then fails with a walltime
    /// error (cooperative: executors have no preemption).
    Walltime,
    /// An extra, always-failing parent is attached, so the task itself
    /// observes a dependency failure.
    Dependency,
    /// The task aborts its worker process mid-execution. Only meaningful
    /// on the worker-pool executor.
    WorkerKill,
}

impl FailureType {
    pub const NAMES: [&'static str; 6] = [
        "exception",
        "divide-by-zero",
        "memory",
        "walltime",
        "dependency",
        "worker-kill",
    ];

    pub fn parse(text: &str) -> Option<FailureType> {
        match text {
            "exception" => Some(FailureType::Exception),
            "divide-by-zero" => Some(FailureType::DivideByZero),
            "memory" => Some(FailureType::Memory),
            "walltime" => Some(FailureType::Walltime),
            "dependency" => Some(FailureType::Dependency),
            "worker-kill" => Some(FailureType::WorkerKill),
            _ => None,
        }
    }
}

fn default_memory_bytes() -> u64 {
    1 << 30
}

fn default_walltime_s() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub failure_type: FailureType,
    /// Per-task injection probability in `[0, 1]`.
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Allocation bound for memory failures.
    #[serde(default = "default_memory_bytes")]
    pub memory_bytes: u64,
    /// Cooperative deadline for walltime failures, seconds.
    #[serde(default = "default_walltime_s")]
    pub walltime_s: f64,
}

impl FailureSpec {
    pub fn new(failure_type: FailureType, rate: f64, seed: u64) -> FailureSpec {
        FailureSpec {
            failure_type,
            rate,
            seed,
            memory_bytes: default_memory_bytes(),
            walltime_s: default_walltime_s(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(format!("failure rate {} outside [0, 1]", self.rate));
        }
        Ok(())
    }
}

pub const INJECT_EXCEPTION_TASK: &str = "inject_exception";
pub const INJECT_DIVZERO_TASK: &str = "inject_divzero";
pub const INJECT_MEMORY_TASK: &str = "inject_memory";
pub const INJECT_WALLTIME_TASK: &str = "inject_walltime";
pub const INJECT_ABORT_TASK: &str = "inject_abort";

pub(crate) fn register_tasks(registry: &mut TaskRegistry) {
    registry.register(INJECT_EXCEPTION_TASK, |_args| {
        Err(TaskError::Application("injected exception".to_owned()))
    });
    registry.register(INJECT_DIVZERO_TASK, |args| {
        // The numerator and divisor arrive as the last two arguments; the
        // division itself is what fails.
        let n = args.len();
        let numerator = if n >= 2 { int_arg(args, n - 2)? } else { 1 };
        let divisor = if n >= 1 { int_arg(args, n - 1)? } else { 0 };
        Ok(Value::Int(numerator / divisor))
    });
    registry.register(INJECT_MEMORY_TASK, |args| {
        let n = args.len();
        let bytes = if n >= 1 {
            int_arg(args, n - 1)?.max(0) as usize
        } else {
            1 << 30
        };
        let mut hog = vec![0u8; bytes];
        // Touch pages so the allocation is real, then report the failure.
        for i in (0..hog.len()).step_by(4096) {
            hog[i] = 1;
        }
        let touched = hog.iter().step_by(4096).map(|&b| b as u64).sum::<u64>();
        Err(TaskError::MemoryLimit(format!(
            "allocated {bytes} bytes ({touched} pages touched)"
        )))
    });
    registry.register(INJECT_WALLTIME_TASK, |args| {
        let n = args.len();
        let deadline_s = if n >= 1 {
            args[n - 1].as_float().unwrap_or(default_walltime_s())
        } else {
            default_walltime_s()
        };
        std::thread::sleep(Duration::from_secs_f64(deadline_s.max(0.0)));
        Err(TaskError::Walltime(format!(
            "exceeded {deadline_s}s deadline"
        )))
    });
    registry.register(INJECT_ABORT_TASK, |_args| {
        std::process::abort();
    });
}

/// Wraps a spawner so each submission independently fails with probability
/// `rate`. The decision for ordinal `i` is `mix64(seed, i) < rate·2⁶⁴`.
pub struct FailureInjector<'a> {
    inner: &'a dyn TaskSpawner,
    spec: FailureSpec,
    ordinal: AtomicU64,
}

impl<'a> FailureInjector<'a> {
    pub fn wrap(inner: &'a dyn TaskSpawner, spec: FailureSpec) -> FailureInjector<'a> {
        FailureInjector {
            inner,
            spec,
            ordinal: AtomicU64::new(0),
        }
    }

    fn decide(&self, ordinal: u64) -> bool {
        if self.spec.rate <= 0.0 {
            return false;
        }
        if self.spec.rate >= 1.0 {
            return true;
        }
        let threshold = (self.spec.rate * u64::MAX as f64) as u64;
        mix64(self.spec.seed, ordinal) < threshold
    }

    /// Ordinals of the first `count` submissions that would be injected.
    pub fn planned_failures(spec: &FailureSpec, count: u64) -> Vec<u64> {
        let injector = FailureInjector {
            inner: &NullSpawner,
            spec: spec.clone(),
            ordinal: AtomicU64::new(0),
        };
        (0..count).filter(|&i| injector.decide(i)).collect()
    }
}

struct NullSpawner;

impl TaskSpawner for NullSpawner {
    fn submit(&self, _function: &str, _args: Vec<TaskInput>) -> Result<TaskFuture, EngineError> {
        unreachable!("planning never submits")
    }

    fn worker_count(&self) -> usize {
        1
    }
}

impl TaskSpawner for FailureInjector<'_> {
    fn submit(&self, function: &str, mut args: Vec<TaskInput>) -> Result<TaskFuture, EngineError> {
        let ordinal = self.ordinal.fetch_add(1, Ordering::SeqCst);
        if !self.decide(ordinal) {
            return self.inner.submit(function, args);
        }
        match self.spec.failure_type {
            FailureType::Exception => self.inner.submit(INJECT_EXCEPTION_TASK, args),
            FailureType::DivideByZero => {
                args.push(TaskInput::int(1));
                args.push(TaskInput::int(0));
                self.inner.submit(INJECT_DIVZERO_TASK, args)
            }
            FailureType::Memory => {
                args.push(TaskInput::int(self.spec.memory_bytes as i64));
                self.inner.submit(INJECT_MEMORY_TASK, args)
            }
            FailureType::Walltime => {
                args.push(TaskInput::float(self.spec.walltime_s));
                self.inner.submit(INJECT_WALLTIME_TASK, args)
            }
            FailureType::Dependency => {
                // Force a parent into the exception path; the task itself
                // then observes the dependency failure.
                let doomed_parent = self.inner.submit(INJECT_EXCEPTION_TASK, Vec::new())?;
                args.push(TaskInput::future(&doomed_parent));
                self.inner.submit(function, args)
            }
            FailureType::WorkerKill => self.inner.submit(INJECT_ABORT_TASK, args),
        }
    }

    fn worker_count(&self) -> usize {
        self.inner.worker_count()
    }
}
