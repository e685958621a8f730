//! Executes tasks inline, on the submitting thread, at submission time.

use super::{Executor, ExecutorError, ResolvedRequest};
use crate::future::LowLevelFuture;
use crate::registry::TaskRegistry;
use crate::runner::{run_task, TransformerCache};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

pub struct SerialExecutor {
    registry: Arc<TaskRegistry>,
    cache: TransformerCache,
    stopped: AtomicBool,
}

impl SerialExecutor {
    pub fn new() -> SerialExecutor {
        SerialExecutor::with_registry(Arc::clone(TaskRegistry::builtin()))
    }

    pub fn with_registry(registry: Arc<TaskRegistry>) -> SerialExecutor {
        SerialExecutor {
            registry,
            cache: TransformerCache::new(),
            stopped: AtomicBool::new(false),
        }
    }
}

impl Default for SerialExecutor {
    fn default() -> Self {
        Self::new()
    }
}

impl Executor for SerialExecutor {
    fn kind(&self) -> &'static str {
        "serial"
    }

    fn worker_count(&self) -> usize {
        1
    }

    fn submit(&self, request: ResolvedRequest) -> Result<LowLevelFuture, ExecutorError> {
        if self.stopped.load(Ordering::SeqCst) {
            return Err(ExecutorError::Stopped);
        }
        let future = LowLevelFuture::new();
        future.mark_running();
        let outcome = run_task(
            &self.registry,
            &request.function,
            &request.args,
            request.plan.as_ref(),
            &self.cache,
        );
        future.complete(outcome);
        Ok(future)
    }

    fn shutdown(&self, _wait: bool) {
        self.stopped.store(true, Ordering::SeqCst);
    }
}
