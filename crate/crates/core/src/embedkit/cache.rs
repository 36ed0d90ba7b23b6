use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{EmbedError, EmbeddingBackendSpec, TextVector};
use crate::emojikit::EmbeddingTable;

/// On-disk embedding cache in the embedding-table text format. Keys are the
/// first 128 bits of `sha256(backend id || 0x00 || text)`, hex encoded.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    backend_id: String,
    table: Mutex<EmbeddingTable>,
    dirty: Mutex<bool>,
}

impl EmbeddingCache {
    pub fn open(path: impl Into<PathBuf>, spec: &EmbeddingBackendSpec) -> Result<Self, EmbedError> {
        let path = path.into();
        let backend_id = spec.id();
        let table = if path.exists() {
            let t = EmbeddingTable::load(&path).map_err(|e| EmbedError::Cache(e.to_string()))?;
            if t.dim() != spec.dim {
                return Err(EmbedError::Cache(format!(
                    "{} holds {}-dimensional vectors, backend produces {}",
                    path.display(),
                    t.dim(),
                    spec.dim
                )));
            }
            t
        } else {
            EmbeddingTable::new(backend_id.clone(), spec.dim)
        };
        Ok(EmbeddingCache {
            path,
            backend_id,
            table: Mutex::new(table),
            dirty: Mutex::new(false),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.table.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.backend_id.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        h.finalize()[..16]
            .iter()
            .fold(String::with_capacity(32), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    /// Cached vectors by position plus the indices that still need embedding.
    pub(crate) fn lookup<S: AsRef<str>>(
        &self,
        texts: &[S],
    ) -> (Vec<Option<TextVector>>, Vec<usize>) {
        let table = self.table.lock().unwrap();
        let mut misses = Vec::new();
        let hits = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let hit = table
                    .get(&self.key(t.as_ref()))
                    .map(|v| TextVector { values: v.to_vec() });
                if hit.is_none() {
                    misses.push(i);
                }
                hit
            })
            .collect();
        (hits, misses)
    }

    pub(crate) fn store(&self, texts: &[&str], vectors: &[TextVector]) {
        if texts.is_empty() {
            return;
        }
        let mut table = self.table.lock().unwrap();
        for (t, v) in texts.iter().zip(vectors) {
            table.insert_unchecked(self.key(t), v.values.clone());
        }
        *self.dirty.lock().unwrap() = true;
    }

    pub fn flush(&self) -> Result<(), EmbedError> {
        let mut dirty = self.dirty.lock().unwrap();
        if !*dirty {
            return Ok(());
        }
        self.table
            .lock()
            .unwrap()
            .save(&self.path)
            .map_err(|e| EmbedError::Cache(format!("{}: {e}", self.path.display())))?;
        *dirty = false;
        Ok(())
    }
}
