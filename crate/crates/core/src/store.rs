//! Content-addressed cache for neutralizations and transfer scores.
//!
//! Entries live in memory and, when a directory is configured, on disk as
//! `<dir>/<first two hex chars>/<key>.json`. Disk writes go to a temporary
//! file in the same directory and are renamed into place, so readers in this
//! or any other process see either no entry or a complete one.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// On-disk form of one cached value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub kind: String,
    pub value: Value,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// SHA-256 over the operation kind and length-prefixed parts, hex encoded.
pub fn cache_key(kind: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in std::iter::once(kind).chain(parts.iter().copied()) {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Default)]
pub struct Store {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, Value>>,
}

impl Store {
    /// In-memory only.
    pub fn memory() -> Self {
        Store::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Store {
            dir: Some(dir),
            memory: RwLock::default(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn entry_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        let cached = self
            .memory
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(key)
            .cloned();
        let value = match cached {
            Some(v) => v,
            None => match self.read_disk(key)? {
                Some(entry) => {
                    self.memory
                        .write()
                        .unwrap_or_else(|e| e.into_inner())
                        .insert(key.to_string(), entry.value.clone());
                    entry.value
                }
                None => return Ok(None),
            },
        };
        serde_json::from_value(value)
            .map(Some)
            .map_err(|e| Error::Cache(format!("entry {key} does not decode: {e}")))
    }

    pub fn put<T: Serialize>(&self, key: &str, kind: &str, value: &T) -> Result<()> {
        let value = serde_json::to_value(value)?;
        if let Some(dir) = &self.dir {
            let entry = CacheEntry {
                key: key.to_string(),
                kind: kind.to_string(),
                value: value.clone(),
                created_at: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
            };
            write_atomic(&Self::entry_path(dir, key), &serde_json::to_vec(&entry)?)?;
        }
        self.memory
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.to_string(), value);
        Ok(())
    }

    fn read_disk(&self, key: &str) -> Result<Option<CacheEntry>> {
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        let path = Self::entry_path(dir, key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
        if entry.key != key {
            return Err(Error::Cache(format!(
                "{} holds key {} instead of {key}",
                path.display(),
                entry.key
            )));
        }
        Ok(Some(entry))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().expect("entry paths have a parent");
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
