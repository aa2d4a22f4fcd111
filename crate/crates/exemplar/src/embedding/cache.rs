//! Append-only embedding cache. One JSONL file per cache dir; each line maps
//! sha256(model_id, normalized text) to a vector. Loaded fully at open,
//! appended under a mutex, so a single process can share one cache across
//! threads. Re-opening replays the log; later lines win.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::jsonl;

use super::EmbeddingVector;

const CACHE_FILE: &str = "embeddings.jsonl";

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    vector: EmbeddingVector,
}

pub struct EmbeddingCache {
    path: PathBuf,
    inner: Mutex<HashMap<String, EmbeddingVector>>,
}

pub(crate) fn cache_key(model_id: &str, normalized_text: &str) -> String {
    sha256_hex(&[model_id.as_bytes(), &[0u8], normalized_text.as_bytes()])
}

impl EmbeddingCache {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CACHE_FILE);
        let mut map = HashMap::new();
        if path.exists() {
            let lines: Vec<CacheLine> = jsonl::read_records(&path)?;
            for line in lines {
                map.insert(line.key, line.vector);
            }
        }
        Ok(EmbeddingCache {
            path,
            inner: Mutex::new(map),
        })
    }

    pub fn get(&self, model_id: &str, normalized_text: &str) -> Option<EmbeddingVector> {
        let key = cache_key(model_id, normalized_text);
        self.inner.lock().unwrap().get(&key).cloned()
    }

    pub fn put(&self, model_id: &str, normalized_text: &str, vector: &EmbeddingVector) -> Result<()> {
        let key = cache_key(model_id, normalized_text);
        let mut map = self.inner.lock().unwrap();
        if map.contains_key(&key) {
            return Ok(());
        }
        let line = CacheLine {
            key: key.clone(),
            vector: vector.clone(),
        };
        let mut serialized =
            serde_json::to_string(&line).map_err(|e| Error::Validation(e.to_string()))?;
        serialized.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(serialized.as_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        map.insert(key, vector.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
