//! Data-management plugins: filters decide which values leave the task
//! message, transformers move them out and back.
//!
//! A transformer replaces a value with a compact [`Identifier`] at
//! submission time; the execution side (or the client, for results)
//! resolves the identifier back to the original value. Both provided
//! transformers persist the value's canonical frame, so
//! `resolve(transform(v))` is byte-identical at the frame level.

mod file;
mod store;

pub use file::FileTransformer;
pub use store::{StoreService, StoreTransformer};

use crate::value::{TypeTag, Value};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

/// Where a transformed value lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `locator` is an absolute file path.
    File,
    /// `locator` is a 128-bit key in lowercase hex.
    Store,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::File => "file",
            Scheme::Store => "store",
        }
    }
}

/// Compact, serializable stand-in for a transformed value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identifier {
    pub scheme: Scheme,
    pub locator: String,
    /// Length in bytes of the serialized frame the identifier points at.
    pub size: u64,
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} ({} B)",
            self.scheme.name(),
            self.locator,
            self.size
        )
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TransformError {
    #[error("transform failed: {0}")]
    Transform(String),
    #[error("no value at {locator}: {detail}")]
    Missing { locator: String, detail: String },
    #[error("resolve failed for {locator}: {detail}")]
    Resolve { locator: String, detail: String },
    #[error("identifier scheme {ident} not handled by the {transformer} transformer")]
    SchemeMismatch {
        ident: &'static str,
        transformer: &'static str,
    },
    #[error("store connection to {addr} failed: {detail}")]
    Connection { addr: String, detail: String },
}

/// Predicate deciding which values the transformer externalizes.
///
/// `min-size` compares the value's serialized frame length (tag and length
/// header included) against the threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FilterSpec {
    #[default]
    Never,
    Always,
    MinSize {
        threshold: u64,
    },
    TypeTag {
        allowed: BTreeSet<TypeTag>,
    },
}

impl FilterSpec {
    pub fn check(&self, value: &Value) -> bool {
        match self {
            FilterSpec::Never => false,
            FilterSpec::Always => true,
            FilterSpec::MinSize { threshold } => value.frame_len() >= *threshold,
            FilterSpec::TypeTag { allowed } => allowed.contains(&value.type_tag()),
        }
    }

    /// Parses the CLI form: `never`, `always`, `min-size:BYTES`,
    /// `type-tag:TAG[,TAG...]`.
    pub fn parse(text: &str) -> Result<FilterSpec, String> {
        match text {
            "never" => return Ok(FilterSpec::Never),
            "always" => return Ok(FilterSpec::Always),
            _ => {}
        }
        if let Some(raw) = text.strip_prefix("min-size:") {
            let threshold = raw
                .parse::<u64>()
                .map_err(|_| format!("invalid min-size threshold {raw:?}"))?;
            return Ok(FilterSpec::MinSize { threshold });
        }
        if let Some(raw) = text.strip_prefix("type-tag:") {
            let mut allowed = BTreeSet::new();
            for part in raw.split(',').filter(|p| !p.is_empty()) {
                let tag =
                    TypeTag::parse(part).ok_or_else(|| format!("unknown type tag {part:?}"))?;
                allowed.insert(tag);
            }
            if allowed.is_empty() {
                return Err("type-tag filter needs at least one tag".to_owned());
            }
            return Ok(FilterSpec::TypeTag { allowed });
        }
        Err(format!(
            "unknown filter {text:?} (expected never, always, min-size:BYTES or type-tag:TAGS)"
        ))
    }

    pub fn cli_text(&self) -> String {
        match self {
            FilterSpec::Never => "never".to_owned(),
            FilterSpec::Always => "always".to_owned(),
            FilterSpec::MinSize { threshold } => format!("min-size:{threshold}"),
            FilterSpec::TypeTag { allowed } => {
                let tags: Vec<&str> = allowed.iter().map(|t| t.name()).collect();
                format!("type-tag:{}", tags.join(","))
            }
        }
    }
}

/// Moves a value out of the task message, and the inverse.
pub trait Transformer: Send + Sync {
    fn scheme(&self) -> Scheme;
    fn transform(&self, value: &Value) -> Result<Identifier, TransformError>;
    fn resolve(&self, ident: &Identifier) -> Result<Value, TransformError>;
}

/// Serializable description of a transformer; ships to worker processes so
/// they can resolve arguments and transform results.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum TransformerSpec {
    File { dir: PathBuf },
    Store { addr: String },
}

impl TransformerSpec {
    pub fn build(&self) -> Result<Arc<dyn Transformer>, TransformError> {
        match self {
            TransformerSpec::File { dir } => Ok(Arc::new(FileTransformer::new(dir)?)),
            TransformerSpec::Store { addr } => Ok(Arc::new(StoreTransformer::new(addr))),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            TransformerSpec::File { .. } => Scheme::File,
            TransformerSpec::Store { .. } => Scheme::Store,
        }
    }
}

/// Fresh 128-bit locator key.
pub(crate) fn random_key() -> u128 {
    rand::random::<u128>()
}

pub(crate) fn key_to_hex(key: u128) -> String {
    format!("{key:032x}")
}

pub(crate) fn key_from_hex(text: &str) -> Option<u128> {
    if text.len() != 32 {
        return None;
    }
    u128::from_str_radix(text, 16).ok()
}
