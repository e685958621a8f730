//! Transformer that persists frames as files in a cache directory.

use super::{key_to_hex, random_key, Identifier, Scheme, TransformError, Transformer};
use crate::value::Value;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Writes each transformed value to `<dir>/<hex-key>.bin`, creating the file
/// with a write-to-temp-then-rename so readers never observe partial frames.
/// Visibility is atomic via the rename; crash durability is deliberately not
/// promised, since the cache only lives as long as its run directory.
/// Nothing is deleted on resolve; the run directory owns cleanup.
pub struct FileTransformer {
    dir: PathBuf,
}

impl FileTransformer {
    pub fn new(dir: impl AsRef<Path>) -> Result<FileTransformer, TransformError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| {
            TransformError::Transform(format!("cannot create cache dir {}: {e}", dir.display()))
        })?;
        let dir = dir.canonicalize().map_err(|e| {
            TransformError::Transform(format!("cannot canonicalize {}: {e}", dir.display()))
        })?;
        Ok(FileTransformer { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Transformer for FileTransformer {
    fn scheme(&self) -> Scheme {
        Scheme::File
    }

    fn transform(&self, value: &Value) -> Result<Identifier, TransformError> {
        let frame = value.encode();
        let key = key_to_hex(random_key());
        let final_path = self.dir.join(format!("{key}.bin"));
        let tmp_path = self.dir.join(format!(".{key}.tmp"));
        let write = |for_path: &Path| -> std::io::Result<()> {
            let mut f = fs::File::create(tmp_path.as_path())?;
            f.write_all(&frame)?;
            fs::rename(&tmp_path, for_path)
        };
        write(&final_path).map_err(|e| {
            let _ = fs::remove_file(&tmp_path);
            TransformError::Transform(format!("cannot write {}: {e}", final_path.display()))
        })?;
        Ok(Identifier {
            scheme: Scheme::File,
            locator: final_path.to_string_lossy().into_owned(),
            size: frame.len() as u64,
        })
    }

    fn resolve(&self, ident: &Identifier) -> Result<Value, TransformError> {
        if ident.scheme != Scheme::File {
            return Err(TransformError::SchemeMismatch {
                ident: ident.scheme.name(),
                transformer: "file",
            });
        }
        let bytes = fs::read(&ident.locator).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                TransformError::Missing {
                    locator: ident.locator.clone(),
                    detail: e.to_string(),
                }
            } else {
                TransformError::Resolve {
                    locator: ident.locator.clone(),
                    detail: e.to_string(),
                }
            }
        })?;
        Value::decode(&bytes).map_err(|e| TransformError::Resolve {
            locator: ident.locator.clone(),
            detail: e.to_string(),
        })
    }
}
