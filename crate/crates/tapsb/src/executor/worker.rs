//! Worker-process side of the pool: connect back, register, serve tasks.

use super::ipc::{read_message, write_message, Message};
use crate::registry::TaskRegistry;
use crate::runner::{run_task, TransformerCache};
use std::net::TcpStream;

/// Entry point of a worker process (the CLI's hidden `worker` subcommand).
/// Connects to `addr`, announces `index`, then serves tasks until the
/// connection closes. Returns the process exit code.
///
/// The registry is always [`TaskRegistry::builtin`], which is why tasks are
/// named registry entries rather than serialized code: the same build on
/// both sides guarantees identical registries.
pub fn run_worker(addr: &str, index: u32) -> i32 {
    // Task panics are caught and reported through the protocol; the default
    // hook would spam stderr for every injected failure.
    std::panic::set_hook(Box::new(|_| {}));

    let mut stream = match TcpStream::connect(addr) {
        Ok(stream) => stream,
        Err(e) => {
            eprintln!("worker {index}: cannot connect to {addr}: {e}");
            return 1;
        }
    };
    let _ = stream.set_nodelay(true);
    if let Err(e) = write_message(&mut stream, &Message::Register { index }) {
        eprintln!("worker {index}: register failed: {e}");
        return 1;
    }

    let registry = TaskRegistry::builtin();
    let cache = TransformerCache::new();
    loop {
        let message = match read_message(&mut stream) {
            Ok(message) => message,
            // Pool closed the connection (shutdown) or died; either way
            // this worker is done.
            Err(_) => return 0,
        };
        match message {
            Message::Task {
                id,
                function,
                plan,
                args,
            } => {
                let outcome = run_task(registry, &function, &args, plan.as_ref(), &cache);
                let reply = Message::Result {
                    id,
                    report: outcome.report,
                    result: outcome.result,
                };
                if write_message(&mut stream, &reply).is_err() {
                    return 0;
                }
            }
            Message::Ping => {
                if write_message(&mut stream, &Message::Pong).is_err() {
                    return 0;
                }
            }
            // Unexpected traffic; ignore rather than die mid-run.
            Message::Register { .. } | Message::Result { .. } | Message::Pong => {}
        }
    }
}
