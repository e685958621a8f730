//! Fixed pool of in-process worker threads over a shared FIFO queue.

use super::{Executor, ExecutorError, ResolvedRequest};
use crate::future::{LowLevelFuture, TaskOutcome};
use crate::registry::TaskRegistry;
use crate::runner::{run_task, TransformerCache};
use crate::task::TaskError;
use crossbeam_channel::{Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

struct Job {
    request: ResolvedRequest,
    future: LowLevelFuture,
}

pub struct ThreadPoolExecutor {
    workers: usize,
    tx: Mutex<Option<Sender<Job>>>,
    rx: Receiver<Job>,
    handles: Mutex<Vec<JoinHandle<()>>>,
}

impl ThreadPoolExecutor {
    pub fn start(workers: usize) -> ThreadPoolExecutor {
        ThreadPoolExecutor::start_with_registry(workers, Arc::clone(TaskRegistry::builtin()))
    }

    pub fn start_with_registry(workers: usize, registry: Arc<TaskRegistry>) -> ThreadPoolExecutor {
        assert!(workers >= 1, "thread pool needs at least one worker");
        let (tx, rx) = crossbeam_channel::unbounded::<Job>();
        let cache = Arc::new(TransformerCache::new());
        let mut handles = Vec::with_capacity(workers);
        for i in 0..workers {
            let worker_rx = rx.clone();
            let worker_registry = Arc::clone(&registry);
            let worker_cache = Arc::clone(&cache);
            let handle = std::thread::Builder::new()
                .name(format!("pool-worker-{i}"))
                .spawn(move || {
                    while let Ok(job) = worker_rx.recv() {
                        job.future.mark_running();
                        let outcome = run_task(
                            &worker_registry,
                            &job.request.function,
                            &job.request.args,
                            job.request.plan.as_ref(),
                            &worker_cache,
                        );
                        job.future.complete(outcome);
                    }
                })
                .expect("spawn pool worker thread");
            handles.push(handle);
        }
        ThreadPoolExecutor {
            workers,
            tx: Mutex::new(Some(tx)),
            rx,
            handles: Mutex::new(handles),
        }
    }
}

impl Executor for ThreadPoolExecutor {
    fn kind(&self) -> &'static str {
        "thread-pool"
    }

    fn worker_count(&self) -> usize {
        self.workers
    }

    fn submit(&self, request: ResolvedRequest) -> Result<LowLevelFuture, ExecutorError> {
        let guard = self.tx.lock().unwrap();
        let tx = guard.as_ref().ok_or(ExecutorError::Stopped)?;
        let future = LowLevelFuture::new();
        tx.send(Job {
            request,
            future: future.clone(),
        })
        .map_err(|_| ExecutorError::Stopped)?;
        Ok(future)
    }

    fn shutdown(&self, wait: bool) {
        let tx = self.tx.lock().unwrap().take();
        drop(tx); // workers drain the queue and exit
        if wait {
            for handle in self.handles.lock().unwrap().drain(..) {
                let _ = handle.join();
            }
        } else {
            // Fail anything still queued so every future reaches a terminal
            // state, then let worker threads finish their current task.
            while let Ok(job) = self.rx.try_recv() {
                job.future
                    .complete(TaskOutcome::failed_now(TaskError::WorkerFailure(
                        "executor stopped".into(),
                    )));
            }
        }
    }
}

impl Drop for ThreadPoolExecutor {
    fn drop(&mut self) {
        self.shutdown(false);
    }
}
