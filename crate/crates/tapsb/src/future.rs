//! Low-level completion handles shared by all executors.

use crate::task::{epoch_micros, Payload, TaskError};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

/// Observable phase of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskState {
    Pending,
    Running,
    Succeeded,
    Failed,
}

/// Execution-side metrics reported with every completion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecReport {
    /// Wall-clock epoch microseconds when execution began. Zero-length
    /// intervals stamped at completion time are used for tasks that never
    /// executed (dependency failures, stopped executors).
    pub exec_started_at: u64,
    pub exec_ended_at: u64,
    pub resolve_args_us: u64,
    pub transform_result_us: u64,
}

impl ExecReport {
    /// Report for a task that never ran, stamped now.
    pub fn never_ran() -> ExecReport {
        let now = epoch_micros();
        ExecReport {
            exec_started_at: now,
            exec_ended_at: now,
            ..ExecReport::default()
        }
    }
}

/// Terminal outcome of a task as produced by an executor.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub result: Result<Payload, TaskError>,
    pub report: ExecReport,
}

impl TaskOutcome {
    pub fn failed_now(error: TaskError) -> TaskOutcome {
        TaskOutcome {
            result: Err(error),
            report: ExecReport::never_ran(),
        }
    }
}

type Callback = Box<dyn FnOnce(&Arc<TaskOutcome>) + Send>;

struct FutureState {
    outcome: Option<Arc<TaskOutcome>>,
    running: bool,
    callbacks: Vec<Callback>,
}

/// Completion handle owned by a concrete executor. Completes exactly once;
/// later completion attempts are ignored (first writer wins).
#[derive(Clone)]
pub struct LowLevelFuture {
    state: Arc<(Mutex<FutureState>, Condvar)>,
}

impl Default for LowLevelFuture {
    fn default() -> Self {
        Self::new()
    }
}

impl LowLevelFuture {
    pub fn new() -> LowLevelFuture {
        LowLevelFuture {
            state: Arc::new((
                Mutex::new(FutureState {
                    outcome: None,
                    running: false,
                    callbacks: Vec::new(),
                }),
                Condvar::new(),
            )),
        }
    }

    /// Marks the task as executing. No effect once terminal.
    pub fn mark_running(&self) {
        let (lock, _) = &*self.state;
        let mut state = lock.lock().unwrap();
        if state.outcome.is_none() {
            state.running = true;
        }
    }

    pub fn state(&self) -> TaskState {
        let (lock, _) = &*self.state;
        let state = lock.lock().unwrap();
        match &state.outcome {
            Some(outcome) if outcome.result.is_ok() => TaskState::Succeeded,
            Some(_) => TaskState::Failed,
            None if state.running => TaskState::Running,
            None => TaskState::Pending,
        }
    }

    /// Completes the future; returns false if it was already terminal.
    /// Registered callbacks run on the calling thread, outside the lock.
    pub fn complete(&self, outcome: TaskOutcome) -> bool {
        let outcome = Arc::new(outcome);
        let callbacks = {
            let (lock, cond) = &*self.state;
            let mut state = lock.lock().unwrap();
            if state.outcome.is_some() {
                return false;
            }
            state.outcome = Some(Arc::clone(&outcome));
            cond.notify_all();
            std::mem::take(&mut state.callbacks)
        };
        for callback in callbacks {
            callback(&outcome);
        }
        true
    }

    /// Runs `callback` when the future completes, or immediately (on the
    /// calling thread) if it already has.
    pub fn on_complete(&self, callback: impl FnOnce(&Arc<TaskOutcome>) + Send + 'static) {
        let outcome = {
            let (lock, _) = &*self.state;
            let mut state = lock.lock().unwrap();
            match &state.outcome {
                Some(outcome) => Arc::clone(outcome),
                None => {
                    state.callbacks.push(Box::new(callback));
                    return;
                }
            }
        };
        callback(&outcome);
    }

    pub fn peek(&self) -> Option<Arc<TaskOutcome>> {
        let (lock, _) = &*self.state;
        lock.lock().unwrap().outcome.clone()
    }

    /// Blocks until terminal or until `timeout` elapses (`None` waits
    /// forever). Returns `None` on timeout, leaving the state unchanged.
    pub fn wait(&self, timeout: Option<Duration>) -> Option<Arc<TaskOutcome>> {
        let (lock, cond) = &*self.state;
        let mut state = lock.lock().unwrap();
        match timeout {
            None => {
                while state.outcome.is_none() {
                    state = cond.wait(state).unwrap();
                }
                state.outcome.clone()
            }
            Some(timeout) => {
                let deadline = Instant::now() + timeout;
                while state.outcome.is_none() {
                    let remaining = deadline.saturating_duration_since(Instant::now());
                    if remaining.is_zero() {
                        return None;
                    }
                    let (next, timed_out) = cond.wait_timeout(state, remaining).unwrap();
                    state = next;
                    if timed_out.timed_out() && state.outcome.is_none() {
                        return None;
                    }
                }
                state.outcome.clone()
            }
        }
    }
}
