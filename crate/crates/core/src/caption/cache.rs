//! Persistent key/text cache backing the remote captioner. One JSON object
//! per line; the whole file is rewritten sorted by key on flush so repeated
//! runs produce byte-identical cache files.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    text: String,
}

#[derive(Debug)]
pub struct TextCache {
    path: Option<PathBuf>,
    entries: Mutex<BTreeMap<String, String>>,
}

impl TextCache {
    /// Open a cache file, loading existing entries. `None` gives a purely
    /// in-memory cache.
    pub fn open(path: Option<PathBuf>) -> Result<TextCache> {
        let mut entries = BTreeMap::new();
        if let Some(p) = &path {
            if p.exists() {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: CacheLine = serde_json::from_str(line)
                        .map_err(|e| Error::parse(p, i + 1, e.to_string()))?;
                    entries.insert(rec.key, rec.text);
                }
            }
        }
        Ok(TextCache {
            path,
            entries: Mutex::new(entries),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn put(&self, key: String, text: String) {
        self.entries.lock().expect("cache lock").insert(key, text);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewrite the cache file, sorted by key.
    pub fn flush(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let entries = self.entries.lock().expect("cache lock");
        let mut out = String::new();
        for (key, text) in entries.iter() {
            let line = CacheLine {
                key: key.clone(),
                text: text.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("cache line"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
