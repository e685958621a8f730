//! In-memory key-value store served over TCP, and the transformer that
//! talks to it.
//!
//! Wire protocol, all lengths 64-bit little-endian:
//!
//! ```text
//! request  := opcode u8, key [u8; 16], (PUT only) frame_len u64, frame bytes
//! response := status u8, (OK with payload) frame_len u64, frame bytes
//! opcode   := PUT=1 | GET=2 | EXISTS=3 | DELETE=4
//! status   := OK=0 | MISSING=1 | ERROR=2 | CONFLICT=3
//! ```
//!
//! A connection carries any number of requests. Keys are random 128-bit
//! values chosen by the client; PUT of an existing key answers CONFLICT and
//! the client retries with a fresh key, so entries are effectively
//! immutable once written.

use super::{
    key_from_hex, key_to_hex, random_key, Identifier, Scheme, TransformError, Transformer,
};
use crate::value::Value;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

const OP_PUT: u8 = 1;
const OP_GET: u8 = 2;
const OP_EXISTS: u8 = 3;
const OP_DELETE: u8 = 4;

const STATUS_OK: u8 = 0;
const STATUS_MISSING: u8 = 1;
const STATUS_ERROR: u8 = 2;
const STATUS_CONFLICT: u8 = 3;

// Guards against nonsense lengths from a corrupted stream.
const MAX_FRAME_LEN: u64 = 1 << 36;

struct StoreState {
    entries: Mutex<HashMap<u128, Arc<Vec<u8>>>>,
    stopping: AtomicBool,
    conns: Mutex<Vec<TcpStream>>,
}

/// Handle to a running store service; dropping it stops the service.
pub struct StoreService {
    addr: String,
    state: Arc<StoreState>,
    accept_thread: Option<JoinHandle<()>>,
}

impl StoreService {
    /// Binds `host:port` (port 0 picks a free port) and starts serving.
    pub fn bind(bind: &str) -> std::io::Result<StoreService> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?.to_string();
        let state = Arc::new(StoreState {
            entries: Mutex::new(HashMap::new()),
            stopping: AtomicBool::new(false),
            conns: Mutex::new(Vec::new()),
        });
        let accept_state = Arc::clone(&state);
        let accept_thread = std::thread::Builder::new()
            .name("store-accept".to_owned())
            .spawn(move || accept_loop(listener, accept_state))
            .expect("spawn store accept thread");
        Ok(StoreService {
            addr,
            state,
            accept_thread: Some(accept_thread),
        })
    }

    /// Actual bound address, e.g. `127.0.0.1:41733`.
    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn entry_count(&self) -> usize {
        self.state.entries.lock().unwrap().len()
    }

    /// Drops every entry. Benchmark drivers call this between measured
    /// blocks to bound the store's footprint.
    pub fn clear(&self) {
        self.state.entries.lock().unwrap().clear();
    }

    pub fn shutdown(&mut self) {
        if self.state.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock the accept loop.
        let _ = TcpStream::connect(&self.addr);
        for conn in self.state.conns.lock().unwrap().drain(..) {
            let _ = conn.shutdown(Shutdown::Both);
        }
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for StoreService {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, state: Arc<StoreState>) {
    loop {
        let stream = match listener.accept() {
            Ok((stream, _)) => stream,
            Err(_) => break,
        };
        if state.stopping.load(Ordering::SeqCst) {
            break;
        }
        state
            .conns
            .lock()
            .unwrap()
            .push(stream.try_clone().expect("clone store conn"));
        let conn_state = Arc::clone(&state);
        let _ = std::thread::Builder::new()
            .name("store-conn".to_owned())
            .spawn(move || serve_connection(stream, conn_state));
    }
}

fn serve_connection(mut stream: TcpStream, state: Arc<StoreState>) {
    let _ = stream.set_nodelay(true);
    loop {
        let mut head = [0u8; 17];
        if read_exact_or_eof(&mut stream, &mut head).is_err() {
            return;
        }
        let opcode = head[0];
        let key = u128::from_le_bytes(head[1..17].try_into().unwrap());
        let response = match opcode {
            OP_PUT => {
                let mut len_buf = [0u8; 8];
                if stream.read_exact(&mut len_buf).is_err() {
                    return;
                }
                let len = u64::from_le_bytes(len_buf);
                if len > MAX_FRAME_LEN {
                    (STATUS_ERROR, None)
                } else {
                    let mut frame = vec![0u8; len as usize];
                    if stream.read_exact(&mut frame).is_err() {
                        return;
                    }
                    match state.entries.lock().unwrap().entry(key) {
                        std::collections::hash_map::Entry::Occupied(_) => (STATUS_CONFLICT, None),
                        std::collections::hash_map::Entry::Vacant(slot) => {
                            slot.insert(Arc::new(frame));
                            (STATUS_OK, None)
                        }
                    }
                }
            }
            OP_GET => match state.entries.lock().unwrap().get(&key) {
                Some(frame) => (STATUS_OK, Some(Arc::clone(frame))),
                None => (STATUS_MISSING, None),
            },
            OP_EXISTS => {
                if state.entries.lock().unwrap().contains_key(&key) {
                    (STATUS_OK, None)
                } else {
                    (STATUS_MISSING, None)
                }
            }
            OP_DELETE => {
                if state.entries.lock().unwrap().remove(&key).is_some() {
                    (STATUS_OK, None)
                } else {
                    (STATUS_MISSING, None)
                }
            }
            _ => (STATUS_ERROR, None),
        };
        let (status, payload) = response;
        if stream.write_all(&[status]).is_err() {
            return;
        }
        if let Some(frame) = payload {
            if stream
                .write_all(&(frame.len() as u64).to_le_bytes())
                .is_err()
                || stream.write_all(&frame).is_err()
            {
                return;
            }
        }
        if stream.flush().is_err() {
            return;
        }
    }
}

fn read_exact_or_eof(stream: &mut TcpStream, buf: &mut [u8]) -> std::io::Result<()> {
    stream.read_exact(buf)
}

/// Client-side operations against a store service. Usable directly for
/// protocol-level access; [`StoreTransformer`] wraps it for the engine.
///
/// Connections are pooled: a request checks one out (or dials a new one),
/// and returns it on success. A failed request drops its connection, so
/// errors never leave a poisoned stream in the pool.
pub struct StoreClient {
    addr: String,
    pool: Mutex<Vec<TcpStream>>,
}

const POOL_CAP: usize = 8;

pub enum GetOutcome {
    Found(Vec<u8>),
    Missing,
}

impl StoreClient {
    pub fn new(addr: impl Into<String>) -> StoreClient {
        StoreClient {
            addr: addr.into(),
            pool: Mutex::new(Vec::new()),
        }
    }

    fn checkout(&self) -> Result<TcpStream, TransformError> {
        if let Some(stream) = self.pool.lock().unwrap().pop() {
            return Ok(stream);
        }
        let addrs = self
            .addr
            .to_socket_addrs()
            .map_err(|e| TransformError::Connection {
                addr: self.addr.clone(),
                detail: e.to_string(),
            })?;
        for addr in addrs {
            if let Ok(stream) = TcpStream::connect(addr) {
                let _ = stream.set_nodelay(true);
                return Ok(stream);
            }
        }
        Err(TransformError::Connection {
            addr: self.addr.clone(),
            detail: "connect failed".to_owned(),
        })
    }

    fn checkin(&self, stream: TcpStream) {
        let mut pool = self.pool.lock().unwrap();
        if pool.len() < POOL_CAP {
            pool.push(stream);
        }
    }

    fn io_err(&self, e: std::io::Error) -> TransformError {
        TransformError::Connection {
            addr: self.addr.clone(),
            detail: e.to_string(),
        }
    }

    fn request(
        &self,
        msg: &[u8],
        read_reply: impl Fn(&mut TcpStream) -> Result<u8, std::io::Error>,
    ) -> Result<u8, TransformError> {
        // A pooled stream may have gone stale (server side closed); retry
        // once on a fresh connection before reporting the failure.
        for attempt in 0..2 {
            let mut stream = if attempt == 0 {
                self.checkout()?
            } else {
                let mut pool = self.pool.lock().unwrap();
                pool.clear();
                drop(pool);
                self.checkout()?
            };
            let wrote = stream.write_all(msg);
            if wrote.is_err() && attempt == 0 {
                continue;
            }
            wrote.map_err(|e| self.io_err(e))?;
            match read_reply(&mut stream) {
                Ok(status) => {
                    self.checkin(stream);
                    return Ok(status);
                }
                Err(e) => {
                    if attempt == 0 {
                        continue;
                    }
                    return Err(self.io_err(e));
                }
            }
        }
        unreachable!("both attempts return")
    }

    /// PUT; returns false on key conflict.
    pub fn put(&self, key: u128, frame: &[u8]) -> Result<bool, TransformError> {
        let mut msg = Vec::with_capacity(25 + frame.len());
        msg.push(OP_PUT);
        msg.extend_from_slice(&key.to_le_bytes());
        msg.extend_from_slice(&(frame.len() as u64).to_le_bytes());
        msg.extend_from_slice(frame);
        let status = self.request(&msg, |stream| {
            let mut status = [0u8; 1];
            stream.read_exact(&mut status)?;
            Ok(status[0])
        })?;
        match status {
            STATUS_OK => Ok(true),
            STATUS_CONFLICT => Ok(false),
            other => Err(TransformError::Transform(format!(
                "store PUT answered status {other}"
            ))),
        }
    }

    pub fn get(&self, key: u128) -> Result<GetOutcome, TransformError> {
        let mut msg = Vec::with_capacity(17);
        msg.push(OP_GET);
        msg.extend_from_slice(&key.to_le_bytes());
        let found = Mutex::new(None);
        let status = self.request(&msg, |stream| {
            let mut status = [0u8; 1];
            stream.read_exact(&mut status)?;
            if status[0] == STATUS_OK {
                let mut len_buf = [0u8; 8];
                stream.read_exact(&mut len_buf)?;
                let len = u64::from_le_bytes(len_buf);
                if len > MAX_FRAME_LEN {
                    return Err(std::io::Error::other(format!("absurd frame length {len}")));
                }
                let mut frame = vec![0u8; len as usize];
                stream.read_exact(&mut frame)?;
                *found.lock().unwrap() = Some(frame);
            }
            Ok(status[0])
        })?;
        match status {
            STATUS_OK => {
                let frame = found.lock().unwrap().take().ok_or_else(|| {
                    TransformError::Transform("store GET succeeded without payload".to_owned())
                })?;
                Ok(GetOutcome::Found(frame))
            }
            STATUS_MISSING => Ok(GetOutcome::Missing),
            other => Err(TransformError::Transform(format!(
                "store GET answered status {other}"
            ))),
        }
    }

    fn simple_op(&self, opcode: u8, key: u128) -> Result<bool, TransformError> {
        let mut msg = Vec::with_capacity(17);
        msg.push(opcode);
        msg.extend_from_slice(&key.to_le_bytes());
        let status = self.request(&msg, |stream| {
            let mut status = [0u8; 1];
            stream.read_exact(&mut status)?;
            Ok(status[0])
        })?;
        match status {
            STATUS_OK => Ok(true),
            STATUS_MISSING => Ok(false),
            other => Err(TransformError::Transform(format!(
                "store op {opcode} answered status {other}"
            ))),
        }
    }

    pub fn exists(&self, key: u128) -> Result<bool, TransformError> {
        self.simple_op(OP_EXISTS, key)
    }

    pub fn delete(&self, key: u128) -> Result<bool, TransformError> {
        self.simple_op(OP_DELETE, key)
    }
}

/// Transformer backed by a [`StoreService`] reachable at `addr`.
pub struct StoreTransformer {
    client: StoreClient,
}

impl StoreTransformer {
    pub fn new(addr: impl Into<String>) -> StoreTransformer {
        StoreTransformer {
            client: StoreClient::new(addr),
        }
    }

    pub fn client(&self) -> &StoreClient {
        &self.client
    }
}

impl Transformer for StoreTransformer {
    fn scheme(&self) -> Scheme {
        Scheme::Store
    }

    fn transform(&self, value: &Value) -> Result<Identifier, TransformError> {
        let frame = value.encode();
        loop {
            let key = random_key();
            if self.client.put(key, &frame)? {
                return Ok(Identifier {
                    scheme: Scheme::Store,
                    locator: key_to_hex(key),
                    size: frame.len() as u64,
                });
            }
            // Key collision: draw again.
        }
    }

    fn resolve(&self, ident: &Identifier) -> Result<Value, TransformError> {
        if ident.scheme != Scheme::Store {
            return Err(TransformError::SchemeMismatch {
                ident: ident.scheme.name(),
                transformer: "store",
            });
        }
        let key = key_from_hex(&ident.locator).ok_or_else(|| TransformError::Resolve {
            locator: ident.locator.clone(),
            detail: "malformed store key".to_owned(),
        })?;
        match self.client.get(key)? {
            GetOutcome::Found(frame) => {
                Value::decode(&frame).map_err(|e| TransformError::Resolve {
                    locator: ident.locator.clone(),
                    detail: e.to_string(),
                })
            }
            GetOutcome::Missing => Err(TransformError::Missing {
                locator: ident.locator.clone(),
                detail: "key not present in store".to_owned(),
            }),
        }
    }
}
