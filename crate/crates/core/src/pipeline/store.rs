//! Content-addressed artifact store and phase cache.
//!
//! ```text
//! <cache_dir>/objects/<sha256>      artifact bytes (PNG)
//! <cache_dir>/keys/<cache_key>.json  CacheEntry for one (input, phase) pair
//! <cache_dir>/runs/<stamp>-<config_hash>/manifest.json
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::PhaseSpec;
use super::{PipelineError, Result};
use crate::hash::{sha256_hex, ContentHasher};

/// Cache key of applying `phase` to `input`.
pub fn cache_key(input: &[u8], phase: &PhaseSpec) -> String {
    cache_key_for_hash(&sha256_hex(input), phase)
}

/// Same as [`cache_key`] for an input already known by its digest.
pub fn cache_key_for_hash(input_hash: &str, phase: &PhaseSpec) -> String {
    let mut h = ContentHasher::new();
    h.update(input_hash.as_bytes())
        .update(b"\n")
        .update(phase.canonical_json().as_bytes());
    h.finish_hex()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub output_hash: String,
    pub model_id: String,
    /// Whether the backend declared itself deterministic when the entry was made.
    pub deterministic: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["objects", "keys", "runs"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn object_path(&self, hash: &str) -> PathBuf {
        self.root.join("objects").join(hash)
    }

    fn key_path(&self, key: &str) -> PathBuf {
        self.root.join("keys").join(format!("{key}.json"))
    }

    /// Writes into the target directory under a temporary name, then renames.
    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        let dir = path.parent().expect("store paths have a parent");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(bytes).map_err(io_err(path))?;
        tmp.persist(path).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e.error,
        })?;
        Ok(())
    }

    /// Stores `bytes` and returns their digest. Existing objects are not rewritten.
    pub fn put_object(&self, bytes: &[u8]) -> Result<String> {
        let hash = sha256_hex(bytes);
        let path = self.object_path(&hash);
        if !path.is_file() {
            self.write_atomic(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get_object(&self, hash: &str) -> Result<Vec<u8>> {
        let path = self.object_path(hash);
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn has_object(&self, hash: &str) -> bool {
        self.object_path(hash).is_file()
    }

    /// A cache hit requires both the key record and the object it names.
    pub fn lookup(&self, key: &str) -> Option<CacheEntry> {
        let text = fs::read(self.key_path(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&text).ok()?;
        self.has_object(&entry.output_hash).then_some(entry)
    }

    pub fn record(&self, key: &str, entry: &CacheEntry) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        self.write_atomic(&self.key_path(key), &bytes)
    }
}
