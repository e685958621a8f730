//! Task identity, argument payloads, and failure taxonomy.

use crate::transform::Identifier;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// 128-bit task identifier, rendered as lowercase hyphenated hex
/// (`xxxxxxxx-xxxx-xxxx-xxxx-xxxxxxxxxxxx`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(u128);

impl TaskId {
    pub fn from_u128(raw: u128) -> TaskId {
        TaskId(raw)
    }

    pub fn as_u128(self) -> u128 {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_le_bytes()
    }

    pub fn from_bytes(bytes: [u8; 16]) -> TaskId {
        TaskId(u128::from_le_bytes(bytes))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = format!("{:032x}", self.0);
        write!(
            f,
            "{}-{}-{}-{}-{}",
            &hex[0..8],
            &hex[8..12],
            &hex[12..16],
            &hex[16..20],
            &hex[20..32]
        )
    }
}

impl fmt::Debug for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TaskId({self})")
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("malformed task id {0:?}")]
pub struct TaskIdParseError(String);

impl FromStr for TaskId {
    type Err = TaskIdParseError;

    fn from_str(text: &str) -> Result<TaskId, TaskIdParseError> {
        let hex: String = text.chars().filter(|c| *c != '-').collect();
        if hex.len() != 32 || text.len() != 36 {
            return Err(TaskIdParseError(text.to_owned()));
        }
        u128::from_str_radix(&hex, 16)
            .map(TaskId)
            .map_err(|_| TaskIdParseError(text.to_owned()))
    }
}

impl Serialize for TaskId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaskId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<TaskId, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Terminal failure of a task. `kind()` is the stable text logged in the
/// task record's `error_kind` field.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum TaskError {
    #[error("{0}")]
    Application(String),
    #[error("task panicked: {0}")]
    Panic(String),
    #[error("parent task {parent} failed")]
    DependencyFailure { parent: TaskId },
    #[error("worker failure: {0}")]
    WorkerFailure(String),
    #[error("walltime exceeded: {0}")]
    Walltime(String),
    #[error("memory limit exceeded: {0}")]
    MemoryLimit(String),
    #[error("data transform failed: {0}")]
    Transform(String),
}

impl TaskError {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskError::Application(_) => "application",
            TaskError::Panic(_) => "panic",
            TaskError::DependencyFailure { .. } => "dependency-failure",
            TaskError::WorkerFailure(_) => "worker-failure",
            TaskError::Walltime(_) => "walltime",
            TaskError::MemoryLimit(_) => "memory",
            TaskError::Transform(_) => "transform",
        }
    }
}

/// Argument or result data as the executor moves it: either an inline value
/// or an identifier pointing at transformed data. `Seq` only appears in
/// arguments, holding one level of mixed inline/transformed elements that
/// came from dependency substitution.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Value(Value),
    Ident(Identifier),
    Seq(Vec<Payload>),
}

impl Payload {
    /// Serialized byte count this payload stands for: inline frame length
    /// for values, original frame length for transformed data.
    pub fn byte_size(&self) -> u64 {
        match self {
            Payload::Value(v) => v.frame_len(),
            Payload::Ident(id) => id.size,
            Payload::Seq(items) => items.iter().map(Payload::byte_size).sum(),
        }
    }
}

/// Wall-clock epoch timestamp in microseconds.
pub fn epoch_micros() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}
