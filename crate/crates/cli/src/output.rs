//! Output directory management: per-point journal for resume, CSV tables
//! and the JSON sidecar.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const JOURNAL: &str = "points.jsonl";
pub const SIDECAR: &str = "run.json";

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn hash_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("plain data always serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Serialize, Deserialize)]
struct Entry<R> {
    hash: String,
    record: R,
}

/// Completed points keyed by parameter hash. Appends go through a mutex so
/// parallel workers never interleave lines.
pub struct Journal<R> {
    done: HashMap<String, R>,
    sink: Mutex<File>,
}

impl<R: Serialize + DeserializeOwned + Clone> Journal<R> {
    /// Opens `dir/points.jsonl`; with `resume` existing entries are kept,
    /// otherwise the file is truncated. Unreadable lines (a torn final write)
    /// are dropped.
    pub fn open(dir: &Path, resume: bool) -> Result<Self> {
        let path = dir.join(JOURNAL);
        let mut done = HashMap::new();
        if resume && path.exists() {
            let file = File::open(&path).with_context(|| format!("reading {}", path.display()))?;
            for line in BufReader::new(file).lines() {
                if let Ok(e) = serde_json::from_str::<Entry<R>>(&line?) {
                    done.insert(e.hash, e.record);
                }
            }
        }
        // rewrite the surviving entries so a torn tail does not linger
        let mut sink = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut keys: Vec<&String> = done.keys().collect();
        keys.sort();
        for k in keys {
            let line = serde_json::to_string(&Entry { hash: k.clone(), record: done[k].clone() })?;
            writeln!(sink, "{line}")?;
        }
        Ok(Self { done, sink: Mutex::new(sink) })
    }

    pub fn get(&self, hash: &str) -> Option<&R> {
        self.done.get(hash)
    }

    #[cfg(test)]
    pub fn resumed(&self) -> usize {
        self.done.len()
    }

    pub fn append(&self, hash: &str, record: &R) -> Result<()> {
        let line = serde_json::to_string(&Entry { hash: hash.to_string(), record })?;
        let mut f = self.sink.lock().expect("journal mutex poisoned");
        writeln!(f, "{line}")?;
        f.flush()?;
        Ok(())
    }
}

/// Failure of one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Failure {
    pub point: String,
    pub error: String,
}

/// Versioned run description written next to the tables.
#[derive(Debug, Serialize)]
pub struct Sidecar<'a, C: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    /// Hash of command, configuration and step size.
    pub run_id: String,
    pub created_unix: u64,
    pub dt_ns: f64,
    pub config: &'a C,
    pub points: usize,
    pub resumed: usize,
    pub failures: Vec<Failure>,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: PathBuf) -> Result<Self> {
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path })
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
        let mut w = csv::Writer::from_path(self.path.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(name.to_string())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        let mut f = File::create(self.path.join(name))?;
        serde_json::to_writer_pretty(&mut f, value)?;
        writeln!(f)?;
        Ok(name.to_string())
    }

    pub fn sidecar<C: Serialize>(&self, sidecar: &Sidecar<C>) -> Result<()> {
        self.json(SIDECAR, sidecar).map(|_| ())
    }
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Shortest round-trip formatting, so reruns reproduce files byte for byte.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = hash_of(&(1.0, "x"));
        assert_eq!(a, hash_of(&(1.0, "x")));
        assert_ne!(a, hash_of(&(1.0000001, "x")));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn journal_resumes_and_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        {
            let j: Journal<f64> = Journal::open(dir.path(), false).unwrap();
            j.append("a", &1.5).unwrap();
            j.append("b", &2.5).unwrap();
        }
        let mut f = std::fs::OpenOptions::new().append(true).open(dir.path().join(JOURNAL)).unwrap();
        write!(f, "{{\"hash\":\"c\",\"rec").unwrap();
        let j: Journal<f64> = Journal::open(dir.path(), true).unwrap();
        assert_eq!(j.resumed(), 2);
        assert_eq!(j.get("b"), Some(&2.5));
        let fresh: Journal<f64> = Journal::open(dir.path(), false).unwrap();
        assert_eq!(fresh.resumed(), 0);
    }
}
