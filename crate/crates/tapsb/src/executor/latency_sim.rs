//! Simulates a remote executor in front of a local one.
//!
//! Submissions queue up and leave in batches, one batch per scheduling
//! interval, the way a cloud-hosted executor amortizes round trips. Inline
//! payload bytes are charged against a configurable control-channel
//! bandwidth in both directions, so large inline arguments and results pay
//! a size-proportional penalty while transformed data (identifiers) travels
//! nearly free. Task data moved by a transformer bypasses the simulated
//! channel entirely, since it flows worker-to-store directly.

use super::{Executor, ExecutorError, ResolvedRequest};
use crate::future::{LowLevelFuture, TaskOutcome};
use crate::task::{Payload, TaskError};
use std::collections::{BinaryHeap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

struct Job {
    request: ResolvedRequest,
    future: LowLevelFuture,
}

struct DelayedCompletion {
    due: Instant,
    seq: u64,
    outcome: Arc<TaskOutcome>,
    future: LowLevelFuture,
}

impl PartialEq for DelayedCompletion {
    fn eq(&self, other: &Self) -> bool {
        self.due == other.due && self.seq == other.seq
    }
}
impl Eq for DelayedCompletion {}
impl PartialOrd for DelayedCompletion {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for DelayedCompletion {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the earliest deadline.
        other.due.cmp(&self.due).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct QueueState {
    jobs: VecDeque<Job>,
    stopping: bool,
}

#[derive(Default)]
struct DelayState {
    heap: BinaryHeap<DelayedCompletion>,
    seq: u64,
    stopping: bool,
    flush: bool,
}

pub struct LatencySimExecutor {
    inner: Arc<dyn Executor>,
    queue: Arc<(Mutex<QueueState>, Condvar)>,
    delays: Arc<(Mutex<DelayState>, Condvar)>,
    batch_thread: Mutex<Option<JoinHandle<()>>>,
    delay_thread: Mutex<Option<JoinHandle<()>>>,
}

impl LatencySimExecutor {
    pub fn start(
        sched_latency: Duration,
        batch_size: usize,
        control_bandwidth: Option<u64>,
        inner: Arc<dyn Executor>,
    ) -> LatencySimExecutor {
        assert!(batch_size >= 1);
        let queue: Arc<(Mutex<QueueState>, Condvar)> = Arc::new(Default::default());
        let delays: Arc<(Mutex<DelayState>, Condvar)> = Arc::new(Default::default());

        let batch_thread = {
            let queue = Arc::clone(&queue);
            let delays = Arc::clone(&delays);
            let inner = Arc::clone(&inner);
            std::thread::Builder::new()
                .name("latency-sim-batch".to_owned())
                .spawn(move || {
                    batch_loop(
                        sched_latency,
                        batch_size,
                        control_bandwidth,
                        inner,
                        queue,
                        delays,
                    )
                })
                .expect("spawn latency-sim batch thread")
        };
        let delay_thread = {
            let delays = Arc::clone(&delays);
            std::thread::Builder::new()
                .name("latency-sim-delay".to_owned())
                .spawn(move || delay_loop(delays))
                .expect("spawn latency-sim delay thread")
        };

        LatencySimExecutor {
            inner,
            queue,
            delays,
            batch_thread: Mutex::new(Some(batch_thread)),
            delay_thread: Mutex::new(Some(delay_thread)),
        }
    }
}

/// Bytes a payload occupies on the simulated control channel: full frames
/// for inline values, just the identifier encoding for transformed data.
fn control_bytes(payload: &Payload) -> u64 {
    match payload {
        Payload::Value(v) => 1 + v.frame_len(),
        Payload::Ident(ident) => 14 + ident.locator.len() as u64,
        Payload::Seq(items) => 5 + items.iter().map(control_bytes).sum::<u64>(),
    }
}

fn transfer_delay(bytes: u64, bandwidth: Option<u64>) -> Duration {
    match bandwidth {
        Some(bw) if bw > 0 => Duration::from_secs_f64(bytes as f64 / bw as f64),
        _ => Duration::ZERO,
    }
}

fn batch_loop(
    sched_latency: Duration,
    batch_size: usize,
    control_bandwidth: Option<u64>,
    inner: Arc<dyn Executor>,
    queue: Arc<(Mutex<QueueState>, Condvar)>,
    delays: Arc<(Mutex<DelayState>, Condvar)>,
) {
    loop {
        let batch = {
            let (lock, cond) = &*queue;
            let mut state = lock.lock().unwrap();
            if sched_latency > Duration::ZERO {
                // One full scheduling interval per batch departure; submit
                // notifications must not cut the interval short.
                let deadline = Instant::now() + sched_latency;
                loop {
                    if state.stopping {
                        break;
                    }
                    let remaining = deadline.saturating_duration_since(Instant::now());
                    if remaining.is_zero() {
                        break;
                    }
                    state = cond.wait_timeout(state, remaining).unwrap().0;
                }
            } else {
                while state.jobs.is_empty() && !state.stopping {
                    state = cond.wait(state).unwrap();
                }
            }
            if state.jobs.is_empty() && state.stopping {
                return;
            }
            let take = state.jobs.len().min(batch_size);
            state.jobs.drain(..take).collect::<Vec<_>>()
        };
        if batch.is_empty() {
            continue;
        }
        // The whole batch shares one trip through the control channel.
        let request_bytes: u64 = batch
            .iter()
            .map(|job| job.request.args.iter().map(control_bytes).sum::<u64>())
            .sum();
        std::thread::sleep(transfer_delay(request_bytes, control_bandwidth));
        for job in batch {
            job.future.mark_running();
            match inner.submit(job.request) {
                Ok(inner_future) => {
                    let delays = Arc::clone(&delays);
                    let outer = job.future;
                    inner_future.on_complete(move |outcome| {
                        let result_bytes = match &outcome.result {
                            Ok(payload) => control_bytes(payload),
                            Err(_) => 64,
                        };
                        let due = Instant::now() + transfer_delay(result_bytes, control_bandwidth);
                        let (lock, cond) = &*delays;
                        let mut state = lock.lock().unwrap();
                        let seq = state.seq;
                        state.seq += 1;
                        state.heap.push(DelayedCompletion {
                            due,
                            seq,
                            outcome: Arc::clone(outcome),
                            future: outer.clone(),
                        });
                        cond.notify_all();
                    });
                }
                Err(e) => {
                    job.future
                        .complete(TaskOutcome::failed_now(TaskError::WorkerFailure(
                            e.to_string(),
                        )));
                }
            }
        }
    }
}

fn delay_loop(delays: Arc<(Mutex<DelayState>, Condvar)>) {
    let (lock, cond) = &*delays;
    let mut state = lock.lock().unwrap();
    loop {
        let now = Instant::now();
        let mut due = Vec::new();
        while let Some(top) = state.heap.peek() {
            if state.flush || top.due <= now {
                due.push(state.heap.pop().unwrap());
            } else {
                break;
            }
        }
        if !due.is_empty() {
            drop(state);
            for entry in due {
                entry.future.complete(TaskOutcome::clone(&entry.outcome));
            }
            state = lock.lock().unwrap();
            continue;
        }
        if state.stopping && state.heap.is_empty() {
            return;
        }
        state = match state
            .heap
            .peek()
            .map(|top| top.due.saturating_duration_since(now))
        {
            Some(until_due) => cond.wait_timeout(state, until_due).unwrap().0,
            None => cond.wait(state).unwrap(),
        };
    }
}

impl Executor for LatencySimExecutor {
    fn kind(&self) -> &'static str {
        "latency-sim"
    }

    fn worker_count(&self) -> usize {
        self.inner.worker_count()
    }

    fn submit(&self, request: ResolvedRequest) -> Result<LowLevelFuture, ExecutorError> {
        let (lock, cond) = &*self.queue;
        let mut state = lock.lock().unwrap();
        if state.stopping {
            return Err(ExecutorError::Stopped);
        }
        let future = LowLevelFuture::new();
        state.jobs.push_back(Job {
            request,
            future: future.clone(),
        });
        cond.notify_all();
        Ok(future)
    }

    fn shutdown(&self, wait: bool) {
        {
            let (lock, cond) = &*self.queue;
            let mut state = lock.lock().unwrap();
            if state.stopping && !wait {
                // already stopping; nothing further to force
            }
            state.stopping = true;
            if !wait {
                for job in state.jobs.drain(..) {
                    job.future
                        .complete(TaskOutcome::failed_now(TaskError::WorkerFailure(
                            "executor stopped".into(),
                        )));
                }
            }
            cond.notify_all();
        }
        if let Some(handle) = self.batch_thread.lock().unwrap().take() {
            let _ = handle.join();
        }
        self.inner.shutdown(wait);
        {
            let (lock, cond) = &*self.delays;
            let mut state = lock.lock().unwrap();
            state.stopping = true;
            if !wait {
                state.flush = true;
            }
            cond.notify_all();
        }
        if let Some(handle) = self.delay_thread.lock().unwrap().take() {
            let _ = handle.join();
        }
    }
}

impl Drop for LatencySimExecutor {
    fn drop(&mut self) {
        self.shutdown(false);
    }
}
