//! Keyed response cache, in memory with an optional line-JSON backing file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
struct Line<V> {
    key: String,
    value: V,
}

/// Safe to share between threads. When two threads insert the same key the
/// first value wins in memory; both lines may reach the file, and the first
/// one wins again on reload.
pub struct ResponseCache<V> {
    path: Option<PathBuf>,
    map: Mutex<HashMap<String, V>>,
    file: Mutex<Option<File>>,
}

impl<V: Clone + Serialize + DeserializeOwned> ResponseCache<V> {
    pub fn in_memory() -> Self {
        ResponseCache { path: None, map: Mutex::new(HashMap::new()), file: Mutex::new(None) }
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut map = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: Line<V> = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
                })?;
                map.entry(entry.key).or_insert(entry.value);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache { path: Some(path.to_path_buf()), map: Mutex::new(map), file: Mutex::new(Some(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.map.lock().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: &str, value: V) -> io::Result<()> {
        {
            let mut map = self.map.lock().expect("cache lock");
            if map.contains_key(key) {
                return Ok(());
            }
            map.insert(key.to_string(), value.clone());
        }
        if let Some(file) = self.file.lock().expect("cache file lock").as_mut() {
            let line = serde_json::to_string(&Line { key: key.to_string(), value })?;
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn persists_across_reopen() {
        let dir = std::env::temp_dir().join(format!("planlens-cache-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cache.jsonl");
        let _ = std::fs::remove_file(&path);
        let cache: ResponseCache<String> = ResponseCache::open(&path).unwrap();
        cache.insert("k", "v".into()).unwrap();
        cache.insert("k", "other".into()).unwrap();
        drop(cache);
        let again: ResponseCache<String> = ResponseCache::open(&path).unwrap();
        assert_eq!(again.get("k").as_deref(), Some("v"));
        assert_eq!(again.len(), 1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
