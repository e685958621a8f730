//! Framed wire protocol between the worker pool and its worker processes.
//!
//! Each message is an envelope `body_len u64 LE` followed by the body, which
//! starts with a 1-byte opcode. Task arguments and results travel as the
//! canonical value frames; the data plan is itself encoded as a frame so the
//! whole protocol stays self-describing.

use super::DataPlan;
use crate::future::ExecReport;
use crate::task::{Payload, TaskError, TaskId};
use crate::transform::{FilterSpec, Identifier, Scheme, TransformerSpec};
use crate::value::{TypeTag, Value};
use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::PathBuf;

const OP_REGISTER: u8 = 1;
const OP_TASK: u8 = 2;
const OP_RESULT: u8 = 3;
const OP_PING: u8 = 4;
const OP_PONG: u8 = 5;

// Envelope guard; larger bodies indicate a corrupt stream.
const MAX_BODY: u64 = 1 << 37;

#[derive(Debug, thiserror::Error)]
pub enum IpcError {
    #[error("ipc io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ipc decode: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Register {
        index: u32,
    },
    Task {
        id: TaskId,
        function: String,
        plan: Option<DataPlan>,
        args: Vec<Payload>,
    },
    Result {
        id: TaskId,
        report: ExecReport,
        result: Result<Payload, TaskError>,
    },
    Ping,
    Pong,
}

pub fn write_message(w: &mut impl Write, message: &Message) -> Result<(), IpcError> {
    let mut body = Vec::new();
    encode_body(message, &mut body);
    w.write_all(&(body.len() as u64).to_le_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

pub fn read_message(r: &mut impl Read) -> Result<Message, IpcError> {
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)?;
    let len = u64::from_le_bytes(len_buf);
    if len > MAX_BODY {
        return Err(IpcError::Decode(format!("body length {len} exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    decode_body(&body)
}

fn encode_body(message: &Message, out: &mut Vec<u8>) {
    match message {
        Message::Register { index } => {
            out.push(OP_REGISTER);
            out.extend_from_slice(&index.to_le_bytes());
        }
        Message::Task {
            id,
            function,
            plan,
            args,
        } => {
            out.push(OP_TASK);
            out.extend_from_slice(&id.to_bytes());
            out.extend_from_slice(&(function.len() as u32).to_le_bytes());
            out.extend_from_slice(function.as_bytes());
            match plan {
                None => out.push(0),
                Some(plan) => {
                    out.push(1);
                    plan_to_value(plan).encode_into(out);
                }
            }
            out.extend_from_slice(&(args.len() as u32).to_le_bytes());
            for arg in args {
                encode_payload(arg, out);
            }
        }
        Message::Result { id, report, result } => {
            out.push(OP_RESULT);
            out.extend_from_slice(&id.to_bytes());
            out.extend_from_slice(&report.exec_started_at.to_le_bytes());
            out.extend_from_slice(&report.exec_ended_at.to_le_bytes());
            out.extend_from_slice(&report.resolve_args_us.to_le_bytes());
            out.extend_from_slice(&report.transform_result_us.to_le_bytes());
            match result {
                Ok(payload) => {
                    out.push(0);
                    encode_payload(payload, out);
                }
                Err(error) => {
                    out.push(1);
                    encode_error(error, out);
                }
            }
        }
        Message::Ping => out.push(OP_PING),
        Message::Pong => out.push(OP_PONG),
    }
}

fn decode_body(body: &[u8]) -> Result<Message, IpcError> {
    let mut c = Reader {
        bytes: body,
        pos: 0,
    };
    let opcode = c.u8()?;
    let message = match opcode {
        OP_REGISTER => Message::Register { index: c.u32()? },
        OP_TASK => {
            let id = TaskId::from_bytes(c.array16()?);
            let name_len = c.u32()? as usize;
            let function = String::from_utf8(c.take(name_len)?.to_vec())
                .map_err(|_| IpcError::Decode("function name not UTF-8".into()))?;
            let plan = match c.u8()? {
                0 => None,
                1 => Some(plan_from_value(&c.frame()?)?),
                other => return Err(IpcError::Decode(format!("bad plan marker {other}"))),
            };
            let argc = c.u32()? as usize;
            let mut args = Vec::with_capacity(argc.min(4096));
            for _ in 0..argc {
                args.push(c.payload()?);
            }
            Message::Task {
                id,
                function,
                plan,
                args,
            }
        }
        OP_RESULT => {
            let id = TaskId::from_bytes(c.array16()?);
            let report = ExecReport {
                exec_started_at: c.u64()?,
                exec_ended_at: c.u64()?,
                resolve_args_us: c.u64()?,
                transform_result_us: c.u64()?,
            };
            let result = match c.u8()? {
                0 => Ok(c.payload()?),
                1 => Err(c.error()?),
                other => return Err(IpcError::Decode(format!("bad result marker {other}"))),
            };
            Message::Result { id, report, result }
        }
        OP_PING => Message::Ping,
        OP_PONG => Message::Pong,
        other => return Err(IpcError::Decode(format!("unknown opcode {other}"))),
    };
    if c.pos != body.len() {
        return Err(IpcError::Decode(format!(
            "{} trailing bytes",
            body.len() - c.pos
        )));
    }
    Ok(message)
}

const PAYLOAD_VALUE: u8 = 0;
const PAYLOAD_IDENT: u8 = 1;
const PAYLOAD_SEQ: u8 = 2;

fn encode_payload(payload: &Payload, out: &mut Vec<u8>) {
    match payload {
        Payload::Value(v) => {
            out.push(PAYLOAD_VALUE);
            v.encode_into(out);
        }
        Payload::Ident(ident) => {
            out.push(PAYLOAD_IDENT);
            out.push(match ident.scheme {
                Scheme::File => 0,
                Scheme::Store => 1,
            });
            out.extend_from_slice(&(ident.locator.len() as u32).to_le_bytes());
            out.extend_from_slice(ident.locator.as_bytes());
            out.extend_from_slice(&ident.size.to_le_bytes());
        }
        Payload::Seq(items) => {
            out.push(PAYLOAD_SEQ);
            out.extend_from_slice(&(items.len() as u32).to_le_bytes());
            for item in items {
                encode_payload(item, out);
            }
        }
    }
}

const ERR_APPLICATION: u8 = 0;
const ERR_PANIC: u8 = 1;
const ERR_WALLTIME: u8 = 2;
const ERR_MEMORY: u8 = 3;
const ERR_TRANSFORM: u8 = 4;
const ERR_WORKER: u8 = 5;
const ERR_DEPENDENCY: u8 = 6;

fn encode_error(error: &TaskError, out: &mut Vec<u8>) {
    let (code, message): (u8, &str) = match error {
        TaskError::Application(m) => (ERR_APPLICATION, m),
        TaskError::Panic(m) => (ERR_PANIC, m),
        TaskError::Walltime(m) => (ERR_WALLTIME, m),
        TaskError::MemoryLimit(m) => (ERR_MEMORY, m),
        TaskError::Transform(m) => (ERR_TRANSFORM, m),
        TaskError::WorkerFailure(m) => (ERR_WORKER, m),
        TaskError::DependencyFailure { parent } => {
            out.push(ERR_DEPENDENCY);
            out.extend_from_slice(&parent.to_bytes());
            return;
        }
    };
    out.push(code);
    out.extend_from_slice(&(message.len() as u32).to_le_bytes());
    out.extend_from_slice(message.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], IpcError> {
        if self.bytes.len() - self.pos < n {
            return Err(IpcError::Decode("message truncated".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, IpcError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IpcError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IpcError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn array16(&mut self) -> Result<[u8; 16], IpcError> {
        Ok(self.take(16)?.try_into().unwrap())
    }

    fn frame(&mut self) -> Result<Value, IpcError> {
        let (value, used) = Value::decode_prefix(&self.bytes[self.pos..])
            .map_err(|e| IpcError::Decode(e.to_string()))?;
        self.pos += used;
        Ok(value)
    }

    fn payload(&mut self) -> Result<Payload, IpcError> {
        match self.u8()? {
            PAYLOAD_VALUE => Ok(Payload::Value(self.frame()?)),
            PAYLOAD_IDENT => {
                let scheme = match self.u8()? {
                    0 => Scheme::File,
                    1 => Scheme::Store,
                    other => return Err(IpcError::Decode(format!("bad scheme byte {other}"))),
                };
                let len = self.u32()? as usize;
                let locator = String::from_utf8(self.take(len)?.to_vec())
                    .map_err(|_| IpcError::Decode("locator not UTF-8".into()))?;
                let size = self.u64()?;
                Ok(Payload::Ident(Identifier {
                    scheme,
                    locator,
                    size,
                }))
            }
            PAYLOAD_SEQ => {
                let count = self.u32()? as usize;
                let mut items = Vec::with_capacity(count.min(4096));
                for _ in 0..count {
                    items.push(self.payload()?);
                }
                Ok(Payload::Seq(items))
            }
            other => Err(IpcError::Decode(format!("bad payload kind {other}"))),
        }
    }

    fn error(&mut self) -> Result<TaskError, IpcError> {
        let code = self.u8()?;
        if code == ERR_DEPENDENCY {
            return Ok(TaskError::DependencyFailure {
                parent: TaskId::from_bytes(self.array16()?),
            });
        }
        let len = self.u32()? as usize;
        let message = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| IpcError::Decode("error text not UTF-8".into()))?;
        Ok(match code {
            ERR_APPLICATION => TaskError::Application(message),
            ERR_PANIC => TaskError::Panic(message),
            ERR_WALLTIME => TaskError::Walltime(message),
            ERR_MEMORY => TaskError::MemoryLimit(message),
            ERR_TRANSFORM => TaskError::Transform(message),
            ERR_WORKER => TaskError::WorkerFailure(message),
            other => return Err(IpcError::Decode(format!("bad error code {other}"))),
        })
    }
}

fn plan_to_value(plan: &DataPlan) -> Value {
    let transformer = match &plan.transformer {
        TransformerSpec::File { dir } => Value::List(vec![
            Value::Text("file".into()),
            Value::Text(dir.to_string_lossy().into_owned()),
        ]),
        TransformerSpec::Store { addr } => {
            Value::List(vec![Value::Text("store".into()), Value::Text(addr.clone())])
        }
    };
    let filter = match &plan.filter {
        FilterSpec::Never => Value::List(vec![Value::Text("never".into())]),
        FilterSpec::Always => Value::List(vec![Value::Text("always".into())]),
        FilterSpec::MinSize { threshold } => Value::List(vec![
            Value::Text("min-size".into()),
            Value::Int(*threshold as i64),
        ]),
        FilterSpec::TypeTag { allowed } => Value::List(vec![
            Value::Text("type-tag".into()),
            Value::List(
                allowed
                    .iter()
                    .map(|t| Value::Text(t.name().into()))
                    .collect(),
            ),
        ]),
    };
    Value::List(vec![transformer, filter])
}

fn plan_from_value(value: &Value) -> Result<DataPlan, IpcError> {
    let bad = |what: &str| IpcError::Decode(format!("malformed data plan: {what}"));
    let parts = value.as_list().ok_or_else(|| bad("not a list"))?;
    if parts.len() != 2 {
        return Err(bad("expected [transformer, filter]"));
    }
    let t = parts[0]
        .as_list()
        .ok_or_else(|| bad("transformer not a list"))?;
    let transformer = match (
        t.first().and_then(Value::as_text),
        t.get(1).and_then(Value::as_text),
    ) {
        (Some("file"), Some(dir)) => TransformerSpec::File {
            dir: PathBuf::from(dir),
        },
        (Some("store"), Some(addr)) => TransformerSpec::Store {
            addr: addr.to_owned(),
        },
        _ => return Err(bad("unknown transformer")),
    };
    let f = parts[1].as_list().ok_or_else(|| bad("filter not a list"))?;
    let filter = match f.first().and_then(Value::as_text) {
        Some("never") => FilterSpec::Never,
        Some("always") => FilterSpec::Always,
        Some("min-size") => {
            let threshold = f
                .get(1)
                .and_then(Value::as_int)
                .ok_or_else(|| bad("min-size threshold"))?;
            FilterSpec::MinSize {
                threshold: threshold as u64,
            }
        }
        Some("type-tag") => {
            let tags = f
                .get(1)
                .and_then(Value::as_list)
                .ok_or_else(|| bad("type-tag list"))?;
            let mut allowed = BTreeSet::new();
            for tag in tags {
                let name = tag.as_text().ok_or_else(|| bad("type tag not text"))?;
                allowed.insert(TypeTag::parse(name).ok_or_else(|| bad("unknown type tag"))?);
            }
            FilterSpec::TypeTag { allowed }
        }
        _ => return Err(bad("unknown filter")),
    };
    Ok(DataPlan {
        transformer,
        filter,
    })
}
