//! Pool of worker OS processes connected over local TCP streams.
//!
//! The pool binds an ephemeral listener, spawns `workers` processes of the
//! worker program (the CLI binary in worker mode), and pairs each with a
//! host thread. Dispatch is FIFO through one shared queue: the first idle
//! host takes the next task, writes it to its worker, and blocks for the
//! result. A worker that dies — killed, crashed, or aborted mid-task —
//! fails its current task with a worker-failure error and is replaced so
//! the pool keeps its size.

use super::ipc::{read_message, write_message, Message};
use super::{Executor, ExecutorError, ResolvedRequest};
use crate::future::{LowLevelFuture, TaskOutcome};
use crate::task::{TaskError, TaskId};
use crossbeam_channel::{Receiver, Sender};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

const START_TIMEOUT: Duration = Duration::from_secs(30);
const RESPAWN_ATTEMPTS: usize = 3;

/// Environment variable naming the worker program, consulted when the spec
/// does not carry an explicit path. Falls back to the current executable.
pub const WORKER_BIN_ENV: &str = "TAPSB_WORKER_BIN";

struct Job {
    request: ResolvedRequest,
    future: LowLevelFuture,
}

struct Slot {
    stream_tx: Sender<TcpStream>,
    stream_rx: Receiver<TcpStream>,
    control_tx: Sender<Control>,
    control_rx: Receiver<Control>,
    child: Mutex<Option<Child>>,
    generation: AtomicU64,
    busy: Mutex<Option<TaskId>>,
}

enum Control {
    Killed { generation: u64 },
}

struct PoolShared {
    addr: SocketAddr,
    program: PathBuf,
    slots: Vec<Slot>,
    /// No new submissions; hosts drain and exit.
    stopping: AtomicBool,
    /// Force-stop: fail work, skip respawns.
    aborting: AtomicBool,
    /// Set once nothing will ever register again; the accept loop exits on
    /// its next wakeup. Kept separate from `stopping` so workers respawned
    /// during a graceful drain can still register.
    accept_done: AtomicBool,
}

pub struct WorkerPoolExecutor {
    shared: Arc<PoolShared>,
    workers: usize,
    drain_timeout: Duration,
    dispatch_tx: Mutex<Option<Sender<Job>>>,
    dispatch_rx: Receiver<Job>,
    hosts: Mutex<Vec<JoinHandle<()>>>,
    acceptor: Mutex<Option<JoinHandle<()>>>,
}

impl WorkerPoolExecutor {
    /// Spawns `workers` worker processes and waits for every one to
    /// register and answer a ping.
    pub fn start(
        workers: usize,
        worker_program: Option<PathBuf>,
        drain_timeout: Duration,
    ) -> Result<WorkerPoolExecutor, ExecutorError> {
        assert!(workers >= 1, "worker pool needs at least one worker");
        let program = resolve_worker_program(worker_program)?;
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| ExecutorError::Startup {
            index: 0,
            detail: format!("bind failed: {e}"),
        })?;
        let addr = listener.local_addr().map_err(|e| ExecutorError::Startup {
            index: 0,
            detail: format!("local_addr failed: {e}"),
        })?;

        let slots = (0..workers)
            .map(|_| {
                let (stream_tx, stream_rx) = crossbeam_channel::unbounded();
                let (control_tx, control_rx) = crossbeam_channel::unbounded();
                Slot {
                    stream_tx,
                    stream_rx,
                    control_tx,
                    control_rx,
                    child: Mutex::new(None),
                    generation: AtomicU64::new(0),
                    busy: Mutex::new(None),
                }
            })
            .collect();
        let shared = Arc::new(PoolShared {
            addr,
            program,
            slots,
            stopping: AtomicBool::new(false),
            aborting: AtomicBool::new(false),
            accept_done: AtomicBool::new(false),
        });

        let acceptor = {
            let shared = Arc::clone(&shared);
            std::thread::Builder::new()
                .name("pool-accept".to_owned())
                .spawn(move || accept_loop(listener, shared))
                .expect("spawn pool acceptor")
        };

        // Spawn every worker first so they start up concurrently, then
        // handshake each one.
        let mut streams = Vec::with_capacity(workers);
        for index in 0..workers {
            if let Err(e) = spawn_worker(&shared, index) {
                shared.stopping.store(true, Ordering::SeqCst);
                shared.accept_done.store(true, Ordering::SeqCst);
                kill_all(&shared);
                let _ = TcpStream::connect(addr);
                let _ = acceptor.join();
                return Err(e);
            }
        }
        for index in 0..workers {
            match handshake(&shared, index, START_TIMEOUT) {
                Ok(stream) => streams.push(stream),
                Err(detail) => {
                    shared.stopping.store(true, Ordering::SeqCst);
                    shared.accept_done.store(true, Ordering::SeqCst);
                    kill_all(&shared);
                    let _ = TcpStream::connect(addr);
                    let _ = acceptor.join();
                    return Err(ExecutorError::Startup { index, detail });
                }
            }
        }

        let (dispatch_tx, dispatch_rx) = crossbeam_channel::unbounded::<Job>();
        let mut hosts = Vec::with_capacity(workers);
        for (index, stream) in streams.into_iter().enumerate() {
            let shared = Arc::clone(&shared);
            let rx = dispatch_rx.clone();
            hosts.push(
                std::thread::Builder::new()
                    .name(format!("pool-host-{index}"))
                    .spawn(move || host_loop(shared, index, rx, stream))
                    .expect("spawn pool host thread"),
            );
        }

        Ok(WorkerPoolExecutor {
            shared,
            workers,
            drain_timeout,
            dispatch_tx: Mutex::new(Some(dispatch_tx)),
            dispatch_rx,
            hosts: Mutex::new(hosts),
            acceptor: Mutex::new(Some(acceptor)),
        })
    }

    /// Abruptly terminates worker `index`. Any task running there completes
    /// with a worker-failure error; the pool replaces the process.
    pub fn kill_worker(&self, index: usize) -> Result<(), ExecutorError> {
        let slot = self
            .shared
            .slots
            .get(index)
            .ok_or(ExecutorError::InvalidWorker(index))?;
        let generation = slot.generation.load(Ordering::SeqCst);
        {
            let mut child = slot.child.lock().unwrap();
            if let Some(child) = child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
            *child = None;
        }
        let _ = slot.control_tx.send(Control::Killed { generation });
        Ok(())
    }

    /// Task currently dispatched to worker `index`, if any.
    pub fn current_task(&self, index: usize) -> Option<TaskId> {
        self.shared
            .slots
            .get(index)
            .and_then(|slot| *slot.busy.lock().unwrap())
    }

    pub fn worker_pid(&self, index: usize) -> Option<u32> {
        self.shared
            .slots
            .get(index)
            .and_then(|slot| slot.child.lock().unwrap().as_ref().map(Child::id))
    }

    /// Stops the pool: stops accepting work, lets hosts drain the queue for
    /// up to `drain` (`None` waits indefinitely), then kills whatever is
    /// still running. In-flight tasks cut off by the kill complete with
    /// worker-failure errors; queued tasks that never dispatched do too.
    pub fn stop(&self, drain: Option<Duration>) {
        let tx = self.dispatch_tx.lock().unwrap().take();
        if tx.is_none() && self.hosts.lock().unwrap().is_empty() {
            return;
        }
        self.shared.stopping.store(true, Ordering::SeqCst);
        drop(tx);

        let mut hosts = {
            let mut guard = self.hosts.lock().unwrap();
            std::mem::take(&mut *guard)
        };
        if let Some(drain) = drain {
            let deadline = Instant::now() + drain;
            while Instant::now() < deadline && hosts.iter().any(|h| !h.is_finished()) {
                std::thread::sleep(Duration::from_millis(5));
            }
            if hosts.iter().any(|h| !h.is_finished()) {
                self.shared.aborting.store(true, Ordering::SeqCst);
                kill_all(&self.shared);
            }
        }
        for host in hosts.drain(..) {
            let _ = host.join();
        }
        // Completion totality: fail anything still queued.
        while let Ok(job) = self.dispatch_rx.try_recv() {
            job.future
                .complete(TaskOutcome::failed_now(TaskError::WorkerFailure(
                    "worker pool stopped".into(),
                )));
        }
        self.shared.accept_done.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.shared.addr);
        if let Some(acceptor) = self.acceptor.lock().unwrap().take() {
            let _ = acceptor.join();
        }
        kill_all(&self.shared);
    }
}

impl Executor for WorkerPoolExecutor {
    fn kind(&self) -> &'static str {
        "worker-pool"
    }

    fn worker_count(&self) -> usize {
        self.workers
    }

    fn submit(&self, request: ResolvedRequest) -> Result<LowLevelFuture, ExecutorError> {
        let guard = self.dispatch_tx.lock().unwrap();
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
        if wait {
            // Engine shutdown drains in-flight tasks before calling this,
            // so the configured timeout only bites on direct use.
            self.stop(Some(self.drain_timeout));
        } else {
            self.stop(Some(Duration::ZERO));
        }
    }
}

impl Drop for WorkerPoolExecutor {
    fn drop(&mut self) {
        self.stop(Some(Duration::ZERO));
    }
}

fn resolve_worker_program(explicit: Option<PathBuf>) -> Result<PathBuf, ExecutorError> {
    if let Some(program) = explicit {
        return Ok(program);
    }
    if let Ok(env_program) = std::env::var(WORKER_BIN_ENV) {
        if !env_program.is_empty() {
            return Ok(PathBuf::from(env_program));
        }
    }
    std::env::current_exe().map_err(|e| ExecutorError::Startup {
        index: 0,
        detail: format!("cannot locate worker program: {e}"),
    })
}

fn spawn_worker(shared: &PoolShared, index: usize) -> Result<(), ExecutorError> {
    let child = Command::new(&shared.program)
        .arg("worker")
        .arg("--connect")
        .arg(shared.addr.to_string())
        .arg("--index")
        .arg(index.to_string())
        .stdin(Stdio::null())
        .spawn()
        .map_err(|e| ExecutorError::Startup {
            index,
            detail: format!("spawn {} failed: {e}", shared.program.display()),
        })?;
    *shared.slots[index].child.lock().unwrap() = Some(child);
    Ok(())
}

/// Waits for worker `index` to register and answer a ping; returns its
/// stream ready for task traffic. Gives up early when the pool starts
/// stopping.
fn handshake(shared: &PoolShared, index: usize, timeout: Duration) -> Result<TcpStream, String> {
    let slot = &shared.slots[index];
    let deadline = Instant::now() + timeout;
    let mut stream = loop {
        match slot.stream_rx.recv_timeout(Duration::from_millis(50)) {
            Ok(stream) => break stream,
            Err(_) => {
                if shared.aborting.load(Ordering::SeqCst) {
                    return Err(format!("pool stopped while waiting for worker {index}"));
                }
                if Instant::now() >= deadline {
                    return Err(format!(
                        "worker {index} did not register within {timeout:?}"
                    ));
                }
            }
        }
    };
    write_message(&mut stream, &Message::Ping).map_err(|e| format!("ping worker {index}: {e}"))?;
    let _ = stream.set_read_timeout(Some(timeout));
    match read_message(&mut stream) {
        Ok(Message::Pong) => {}
        Ok(other) => return Err(format!("worker {index} answered ping with {other:?}")),
        Err(e) => return Err(format!("worker {index} ping: {e}")),
    }
    let _ = stream.set_read_timeout(None);
    Ok(stream)
}

fn accept_loop(listener: TcpListener, shared: Arc<PoolShared>) {
    loop {
        let mut stream = match listener.accept() {
            Ok((stream, _)) => stream,
            Err(_) => {
                // Transient failures (e.g. a worker aborting while queued in
                // the backlog) must not take the listener down.
                if shared.accept_done.load(Ordering::SeqCst) {
                    return;
                }
                std::thread::sleep(Duration::from_millis(10));
                continue;
            }
        };
        if shared.accept_done.load(Ordering::SeqCst) {
            return;
        }
        let _ = stream.set_nodelay(true);
        let _ = stream.set_read_timeout(Some(Duration::from_secs(5)));
        match read_message(&mut stream) {
            Ok(Message::Register { index }) => {
                let _ = stream.set_read_timeout(None);
                if let Some(slot) = shared.slots.get(index as usize) {
                    let _ = slot.stream_tx.send(stream);
                }
            }
            _ => drop(stream),
        }
    }
}

fn kill_all(shared: &PoolShared) {
    for slot in &shared.slots {
        let mut child = slot.child.lock().unwrap();
        if let Some(child) = child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
        *child = None;
    }
}

fn host_loop(shared: Arc<PoolShared>, index: usize, dispatch_rx: Receiver<Job>, stream: TcpStream) {
    let slot = &shared.slots[index];
    let mut stream = Some(stream);
    loop {
        // A kill notice takes priority over queued work so an idle victim
        // is replaced before it is handed a task.
        match slot.control_rx.try_recv() {
            Ok(Control::Killed { generation }) => {
                if generation == slot.generation.load(Ordering::SeqCst) {
                    stream = respawn(&shared, index);
                    if stream.is_none() {
                        break;
                    }
                }
                continue;
            }
            Err(_) => {}
        }
        crossbeam_channel::select! {
            recv(slot.control_rx) -> control => {
                if let Ok(Control::Killed { generation }) = control {
                    if generation == slot.generation.load(Ordering::SeqCst) {
                        stream = respawn(&shared, index);
                        if stream.is_none() {
                            break;
                        }
                    }
                }
            }
            recv(dispatch_rx) -> job => {
                let Ok(job) = job else { break }; // queue closed and drained
                let Some(live) = stream.as_mut() else {
                    job.future.complete(TaskOutcome::failed_now(TaskError::WorkerFailure(
                        format!("worker {index} unavailable"),
                    )));
                    continue;
                };
                if !run_job(slot, index, live, job) {
                    stream = if shared.aborting.load(Ordering::SeqCst) {
                        break;
                    } else {
                        respawn(&shared, index)
                    };
                    if stream.is_none() {
                        break;
                    }
                }
            }
        }
    }
    // Graceful goodbye: closing the stream makes the worker exit; reap it.
    drop(stream);
    let child = slot.child.lock().unwrap().take();
    if let Some(child) = child {
        reap(child, Duration::from_secs(2));
    }
}

/// Runs one task on the worker. Returns false if the worker connection is
/// no longer usable.
fn run_job(slot: &Slot, index: usize, stream: &mut TcpStream, job: Job) -> bool {
    *slot.busy.lock().unwrap() = Some(job.request.id);
    job.future.mark_running();
    let message = Message::Task {
        id: job.request.id,
        function: job.request.function.clone(),
        plan: job.request.plan.clone(),
        args: job.request.args.clone(),
    };
    let healthy = match write_message(stream, &message) {
        Err(_) => false,
        Ok(()) => loop {
            match read_message(stream) {
                Ok(Message::Result { id, report, result }) => {
                    if id != job.request.id {
                        // Response for a task from a previous connection
                        // incarnation; the stream is no longer coherent.
                        break false;
                    }
                    job.future.complete(TaskOutcome { result, report });
                    *slot.busy.lock().unwrap() = None;
                    return true;
                }
                Ok(Message::Pong) => continue,
                Ok(_) => break false,
                Err(_) => break false,
            }
        },
    };
    if !healthy {
        job.future
            .complete(TaskOutcome::failed_now(TaskError::WorkerFailure(format!(
                "worker {index} connection lost while running task"
            ))));
        *slot.busy.lock().unwrap() = None;
    }
    healthy
}

/// Replaces the worker process behind slot `index`. Returns the fresh
/// stream, or `None` when the pool is force-stopping or the respawn
/// failed. A graceful (draining) stop still respawns, so queued work keeps
/// flowing even if workers die during the drain.
fn respawn(shared: &Arc<PoolShared>, index: usize) -> Option<TcpStream> {
    if shared.aborting.load(Ordering::SeqCst) {
        return None;
    }
    let slot = &shared.slots[index];
    // Reap whatever is left of the previous incarnation.
    if let Some(child) = slot.child.lock().unwrap().take() {
        reap(child, Duration::from_millis(100));
    }
    // Discard stale streams from earlier registrations.
    while slot.stream_rx.try_recv().is_ok() {}
    slot.generation.fetch_add(1, Ordering::SeqCst);
    for _attempt in 0..RESPAWN_ATTEMPTS {
        if spawn_worker(shared, index).is_err() {
            std::thread::sleep(Duration::from_millis(50));
            continue;
        }
        match handshake(shared, index, START_TIMEOUT) {
            Ok(stream) => return Some(stream),
            Err(_) => {
                if let Some(child) = slot.child.lock().unwrap().take() {
                    reap(child, Duration::from_millis(100));
                }
            }
        }
    }
    eprintln!("worker pool: giving up respawning worker {index}");
    None
}

fn reap(mut child: Child, patience: Duration) {
    let deadline = Instant::now() + patience;
    loop {
        match child.try_wait() {
            Ok(Some(_)) => return,
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(_) => return,
        }
    }
}
