//! Key/value byte storage for uploaded dumps and finished bundles.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("no blob at {0}")]
    NotFound(String),
    #[error("invalid blob key {0:?}")]
    InvalidKey(String),
    #[error("blob {key}: {source}")]
    Io { key: String, source: std::io::Error },
}

pub trait BlobStore: Send + Sync {
    fn put(&self, key: &str, bytes: &[u8]) -> Result<(), BlobError>;
    fn get(&self, key: &str) -> Result<Vec<u8>, BlobError>;
    /// Keys starting with `prefix`, sorted.
    fn list(&self, prefix: &str) -> Result<Vec<String>, BlobError>;
    /// Deleting a missing key is not an error.
    fn delete(&self, key: &str) -> Result<(), BlobError>;
}

const STAGING: &str = ".staging";

/// One file per key under a root directory. `a/b/c` maps to `root/a/b/c`.
#[derive(Debug, Clone)]
pub struct FsBlobStore {
    root: PathBuf,
}

impl FsBlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, BlobError> {
        let root = root.into();
        fs::create_dir_all(root.join(STAGING))
            .map_err(|source| BlobError::Io { key: String::new(), source })?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &str) -> Result<PathBuf, BlobError> {
        let bad = key.is_empty()
            || key.contains(['\\', '\0'])
            || key.split('/').any(|s| s.is_empty() || s == "." || s == "..")
            || key.split('/').next() == Some(STAGING);
        if bad {
            return Err(BlobError::InvalidKey(key.to_owned()));
        }
        Ok(self.root.join(key))
    }

    fn walk(&self, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if entry.file_type()?.is_dir() {
                if path != self.root.join(STAGING) {
                    self.walk(&path, out)?;
                }
            } else if let Ok(rel) = path.strip_prefix(&self.root) {
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
}

impl BlobStore for FsBlobStore {
    fn put(&self, key: &str, bytes: &[u8]) -> Result<(), BlobError> {
        let path = self.path(key)?;
        let io = |source| BlobError::Io { key: key.to_owned(), source };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        // write aside then rename, so readers never see half a blob
        let tmp = self.root.join(STAGING).join(uuid::Uuid::new_v4().to_string());
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).and_then(|_| f.sync_data()).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }

    fn get(&self, key: &str) -> Result<Vec<u8>, BlobError> {
        let path = self.path(key)?;
        fs::read(&path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => BlobError::NotFound(key.to_owned()),
            _ => BlobError::Io { key: key.to_owned(), source },
        })
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>, BlobError> {
        let mut keys = Vec::new();
        self.walk(&self.root, &mut keys)
            .map_err(|source| BlobError::Io { key: prefix.to_owned(), source })?;
        keys.retain(|k| k.starts_with(prefix));
        keys.sort();
        Ok(keys)
    }

    fn delete(&self, key: &str) -> Result<(), BlobError> {
        match fs::remove_file(self.path(key)?) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                Err(BlobError::Io { key: key.to_owned(), source: e })
            }
            _ => Ok(()),
        }
    }
}

/// In-process store, mostly for tests.
#[derive(Debug, Default)]
pub struct MemBlobStore {
    blobs: RwLock<BTreeMap<String, Vec<u8>>>,
}

impl MemBlobStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BlobStore for MemBlobStore {
    fn put(&self, key: &str, bytes: &[u8]) -> Result<(), BlobError> {
        if key.is_empty() {
            return Err(BlobError::InvalidKey(key.to_owned()));
        }
        self.blobs.write().unwrap().insert(key.to_owned(), bytes.to_vec());
        Ok(())
    }

    fn get(&self, key: &str) -> Result<Vec<u8>, BlobError> {
        self.blobs.read().unwrap().get(key).cloned().ok_or_else(|| BlobError::NotFound(key.to_owned()))
    }

    fn list(&self, prefix: &str) -> Result<Vec<String>, BlobError> {
        Ok(self.blobs.read().unwrap().keys().filter(|k| k.starts_with(prefix)).cloned().collect())
    }

    fn delete(&self, key: &str) -> Result<(), BlobError> {
        self.blobs.write().unwrap().remove(key);
        Ok(())
    }
}
