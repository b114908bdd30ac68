//! Append-only JSON-lines result store.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// One result line. `D` is absent for extrapolated limits and
/// diffusion-free oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub config_hash: String,
    pub kind: String,
    pub model: String,
    pub symbol: String,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<usize>,
    pub value_re: f64,
    pub value_im: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub n_steps: usize,
    pub seed: u64,
    pub wall_ms: u64,
}

impl Record {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }
}

#[derive(Debug, Clone)]
pub struct ResultStore {
    path: PathBuf,
}

impl ResultStore {
    /// Store at `dir/results.jsonl`, creating `dir` if needed.
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { path: dir.join("results.jsonl") })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[Record]) -> io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        f.write_all(&buf)
    }

    pub fn read_all(&self) -> io::Result<Vec<Record>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(io::Error::from))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> Record {
        Record {
            config_hash: "abc".into(),
            kind: "kernel".into(),
            model: "plane".into(),
            symbol: "zero".into(),
            d: Some(1.0),
            t: 0.5,
            x: Some([0.0, 0.0]),
            y: Some([0.1, 0.0]),
            a: None,
            b: None,
            value_re: 0.2,
            value_im: -1e-3,
            stderr: 1e-4,
            n_paths: 10,
            n_steps: 5,
            seed: 7,
            wall_ms: 3,
        }
    }

    #[test]
    fn appends_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::open(dir.path()).unwrap();
        assert!(store.read_all().unwrap().is_empty());
        store.append(&[record()]).unwrap();
        store.append(&[record(), record()]).unwrap();
        let all = store.read_all().unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0], record());
    }

    #[test]
    fn field_names_and_absent_indices() {
        let line = serde_json::to_string(&record()).unwrap();
        for key in ["config_hash", "\"D\"", "value_re", "value_im", "stderr", "n_paths", "n_steps", "seed", "wall_ms"] {
            assert!(line.contains(key), "{key} missing from {line}");
        }
        assert!(!line.contains("\"a\""));
        let mut limit = record();
        limit.d = None;
        assert!(serde_json::to_string(&limit).unwrap().contains("\"D\":null"));
    }
}
