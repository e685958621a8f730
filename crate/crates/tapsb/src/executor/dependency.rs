//! Adds implicit dataflow to backends that lack it.
//!
//! Submissions whose arguments contain futures are held (without blocking
//! the submitting thread) until every such future completes successfully,
//! then dispatched to the inner executor with the futures replaced by their
//! values. The first failed parent immediately completes the held task with
//! a dependency-failure error naming that parent.

use super::{Executor, ExecutorError, LowArg, ResolvedRequest, TaskRequest};
use crate::future::{LowLevelFuture, TaskOutcome};
use crate::task::{Payload, TaskError, TaskId};
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub struct DependencyExecutor {
    inner: Arc<dyn Executor>,
}

struct Held {
    request: Mutex<Option<TaskRequest>>,
    out: LowLevelFuture,
    remaining: AtomicUsize,
    inner: Arc<dyn Executor>,
}

impl DependencyExecutor {
    pub fn wrap(inner: Arc<dyn Executor>) -> DependencyExecutor {
        DependencyExecutor { inner }
    }

    pub fn inner(&self) -> &Arc<dyn Executor> {
        &self.inner
    }

    pub fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    pub fn worker_count(&self) -> usize {
        self.inner.worker_count()
    }

    pub fn shutdown(&self, wait: bool) {
        self.inner.shutdown(wait);
    }

    /// Parent futures of `request`: futures at the top level of the
    /// argument list plus one level inside `Seq` arguments. A task listed
    /// several times is only waited for once.
    fn collect_parents(args: &[LowArg]) -> Vec<(TaskId, LowLevelFuture)> {
        let mut seen: HashMap<TaskId, ()> = HashMap::new();
        let mut parents = Vec::new();
        let mut push = |task: &TaskId, handle: &LowLevelFuture| {
            if seen.insert(*task, ()).is_none() {
                parents.push((*task, handle.clone()));
            }
        };
        for arg in args {
            match arg {
                LowArg::Future { task, handle } => push(task, handle),
                LowArg::Seq(items) => {
                    for item in items {
                        if let LowArg::Future { task, handle } = item {
                            push(task, handle);
                        }
                    }
                }
                LowArg::Ready(_) => {}
            }
        }
        parents
    }

    pub fn submit(&self, request: TaskRequest) -> Result<LowLevelFuture, ExecutorError> {
        let parents = Self::collect_parents(&request.args);
        if parents.is_empty() {
            let resolved = substitute_args(request);
            return self.inner.submit(resolved);
        }

        let out = LowLevelFuture::new();
        let held = Arc::new(Held {
            request: Mutex::new(Some(request)),
            out: out.clone(),
            remaining: AtomicUsize::new(parents.len()),
            inner: Arc::clone(&self.inner),
        });
        for (parent_id, parent) in parents {
            let held = Arc::clone(&held);
            parent.on_complete(move |outcome| {
                held.parent_done(parent_id, outcome.result.is_err());
            });
        }
        Ok(out)
    }
}

impl Held {
    fn parent_done(self: &Arc<Held>, parent: TaskId, failed: bool) {
        if failed {
            // Drop the request eagerly so held payloads and parent handles
            // are released even while other parents are still running.
            let taken = self.request.lock().unwrap().take();
            if taken.is_some() {
                self.out
                    .complete(TaskOutcome::failed_now(TaskError::DependencyFailure {
                        parent,
                    }));
            }
            return;
        }
        if self.remaining.fetch_sub(1, Ordering::AcqRel) != 1 {
            return;
        }
        let Some(request) = self.request.lock().unwrap().take() else {
            return; // a failing parent beat us to it
        };
        let resolved = substitute_args(request);
        match self.inner.submit(resolved) {
            Ok(inner_future) => {
                let out = self.out.clone();
                out.mark_running();
                inner_future.on_complete(move |outcome| {
                    out.complete(TaskOutcome::clone(outcome));
                });
            }
            Err(e) => {
                self.out
                    .complete(TaskOutcome::failed_now(TaskError::WorkerFailure(
                        e.to_string(),
                    )));
            }
        }
    }
}

/// Replaces every future argument with its parent's result payload. Only
/// called once all parents are terminal and successful.
fn substitute_args(request: TaskRequest) -> ResolvedRequest {
    let args = request.args.into_iter().map(substitute_arg).collect();
    ResolvedRequest {
        id: request.id,
        function: request.function,
        args,
        plan: request.plan,
    }
}

fn substitute_arg(arg: LowArg) -> Payload {
    match arg {
        LowArg::Ready(payload) => payload,
        LowArg::Future { handle, task } => {
            let outcome = handle
                .peek()
                .unwrap_or_else(|| panic!("parent {task} not terminal at dispatch"));
            match &outcome.result {
                Ok(payload) => payload.clone(),
                Err(_) => unreachable!("failed parent handled before dispatch"),
            }
        }
        LowArg::Seq(items) => Payload::Seq(items.into_iter().map(substitute_arg).collect()),
    }
}
