//! Task argument and result values with a canonical binary frame encoding.
//!
//! Every value that crosses a task boundary is serialized as a *frame*:
//! a 1-byte type tag followed by the payload. Variable-length payloads
//! (bytes, text, lists) carry a 32-bit little-endian length; `f64` arrays
//! carry a 64-bit little-endian element count. The encoding is canonical:
//! decoding a frame and re-encoding it reproduces the original bytes,
//! which is what lets transformers promise byte-identical round trips.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Type tag of a serialized frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeTag {
    Bytes,
    Text,
    Int,
    Float,
    F64Array,
    List,
}

impl TypeTag {
    pub const ALL: [TypeTag; 6] = [
        TypeTag::Bytes,
        TypeTag::Text,
        TypeTag::Int,
        TypeTag::Float,
        TypeTag::F64Array,
        TypeTag::List,
    ];

    pub fn wire_byte(self) -> u8 {
        match self {
            TypeTag::Bytes => 1,
            TypeTag::Text => 2,
            TypeTag::Int => 3,
            TypeTag::Float => 4,
            TypeTag::F64Array => 5,
            TypeTag::List => 6,
        }
    }

    pub fn from_wire_byte(byte: u8) -> Option<TypeTag> {
        match byte {
            1 => Some(TypeTag::Bytes),
            2 => Some(TypeTag::Text),
            3 => Some(TypeTag::Int),
            4 => Some(TypeTag::Float),
            5 => Some(TypeTag::F64Array),
            6 => Some(TypeTag::List),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TypeTag::Bytes => "bytes",
            TypeTag::Text => "text",
            TypeTag::Int => "int",
            TypeTag::Float => "float",
            TypeTag::F64Array => "f64-array",
            TypeTag::List => "list",
        }
    }

    pub fn parse(name: &str) -> Option<TypeTag> {
        TypeTag::ALL.iter().copied().find(|t| t.name() == name)
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A task argument or result value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bytes(Vec<u8>),
    Text(String),
    Int(i64),
    Float(f64),
    F64Array(Vec<f64>),
    List(Vec<Value>),
}

/// Errors produced while decoding a frame.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FrameError {
    #[error("frame truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("unknown frame type tag {0:#04x}")]
    UnknownTag(u8),
    #[error("frame text payload is not valid UTF-8")]
    InvalidUtf8,
    #[error("frame has {0} trailing bytes")]
    TrailingBytes(usize),
}

impl Value {
    pub fn type_tag(&self) -> TypeTag {
        match self {
            Value::Bytes(_) => TypeTag::Bytes,
            Value::Text(_) => TypeTag::Text,
            Value::Int(_) => TypeTag::Int,
            Value::Float(_) => TypeTag::Float,
            Value::F64Array(_) => TypeTag::F64Array,
            Value::List(_) => TypeTag::List,
        }
    }

    /// Length in bytes of the serialized frame, without encoding it.
    pub fn frame_len(&self) -> u64 {
        1 + match self {
            Value::Bytes(b) => 4 + b.len() as u64,
            Value::Text(t) => 4 + t.len() as u64,
            Value::Int(_) | Value::Float(_) => 8,
            Value::F64Array(a) => 8 + 8 * a.len() as u64,
            Value::List(items) => 4 + items.iter().map(Value::frame_len).sum::<u64>(),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.type_tag().wire_byte());
        match self {
            Value::Bytes(b) => {
                out.extend_from_slice(&(b.len() as u32).to_le_bytes());
                out.extend_from_slice(b);
            }
            Value::Text(t) => {
                out.extend_from_slice(&(t.len() as u32).to_le_bytes());
                out.extend_from_slice(t.as_bytes());
            }
            Value::Int(i) => out.extend_from_slice(&i.to_le_bytes()),
            Value::Float(x) => out.extend_from_slice(&x.to_le_bytes()),
            Value::F64Array(a) => {
                out.extend_from_slice(&(a.len() as u64).to_le_bytes());
                for x in a {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            Value::List(items) => {
                out.extend_from_slice(&(items.len() as u32).to_le_bytes());
                for item in items {
                    item.encode_into(out);
                }
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.frame_len() as usize);
        self.encode_into(&mut out);
        out
    }

    /// Decodes exactly one frame that must span the whole input.
    pub fn decode(bytes: &[u8]) -> Result<Value, FrameError> {
        let (value, used) = Value::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(FrameError::TrailingBytes(bytes.len() - used));
        }
        Ok(value)
    }

    /// Decodes one frame from the front of `bytes`, returning the value and
    /// the number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Value, usize), FrameError> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let value = cursor.read_frame()?;
        Ok((value, cursor.pos))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Value::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_f64_array(&self) -> Option<&[f64]> {
        match self {
            Value::F64Array(a) => Some(a),
            _ => None,
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], FrameError> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(FrameError::Truncated {
                needed: n - remaining,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_frame(&mut self) -> Result<Value, FrameError> {
        let tag_byte = self.take(1)?[0];
        let tag = TypeTag::from_wire_byte(tag_byte).ok_or(FrameError::UnknownTag(tag_byte))?;
        match tag {
            TypeTag::Bytes => {
                let len = self.read_u32()? as usize;
                Ok(Value::Bytes(self.take(len)?.to_vec()))
            }
            TypeTag::Text => {
                let len = self.read_u32()? as usize;
                let text =
                    std::str::from_utf8(self.take(len)?).map_err(|_| FrameError::InvalidUtf8)?;
                Ok(Value::Text(text.to_owned()))
            }
            TypeTag::Int => Ok(Value::Int(i64::from_le_bytes(
                self.take(8)?.try_into().unwrap(),
            ))),
            TypeTag::Float => Ok(Value::Float(f64::from_le_bytes(
                self.take(8)?.try_into().unwrap(),
            ))),
            TypeTag::F64Array => {
                let count = self.read_u64()? as usize;
                let raw = self.take(
                    count
                        .checked_mul(8)
                        .ok_or(FrameError::Truncated { needed: usize::MAX })?,
                )?;
                let mut data = Vec::with_capacity(count);
                for chunk in raw.chunks_exact(8) {
                    data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
                }
                Ok(Value::F64Array(data))
            }
            TypeTag::List => {
                let count = self.read_u32()? as usize;
                let mut items = Vec::with_capacity(count.min(1024));
                for _ in 0..count {
                    items.push(self.read_frame()?);
                }
                Ok(Value::List(items))
            }
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<Vec<u8>> for Value {
    fn from(v: Vec<u8>) -> Self {
        Value::Bytes(v)
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::F64Array(v)
    }
}

impl From<Vec<Value>> for Value {
    fn from(v: Vec<Value>) -> Self {
        Value::List(v)
    }
}
