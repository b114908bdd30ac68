//! Ladder and matrix artifacts, and their flattening into plot-ready CSV.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use bergmc_core::dk::{DLadder, Extrapolation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    #[serde(rename = "D")]
    pub d: f64,
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
    pub slope_re: f64,
    pub slope_im: f64,
    pub residual: f64,
}

impl From<&Extrapolation> for FitRow {
    fn from(e: &Extrapolation) -> Self {
        Self {
            re: e.limit.re,
            im: e.limit.im,
            stderr: e.stderr,
            slope_re: e.slope.re,
            slope_im: e.slope.im,
            residual: e.residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub a: usize,
    pub b: usize,
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    Ladder { label: String, rungs: Vec<Rung>, fit: Option<FitRow> },
    Matrix { label: String, n: usize, entries: Vec<Entry> },
}

impl Artifact {
    pub fn ladder(label: &str, ladder: &DLadder) -> Self {
        Artifact::Ladder {
            label: label.to_string(),
            rungs: ladder
                .points
                .iter()
                .map(|p| Rung { d: p.d, re: p.value.re, im: p.value.im, stderr: p.stderr })
                .collect(),
            fit: ladder.fit.as_ref().map(FitRow::from),
        }
    }

    /// Square matrix from a row-major accessor.
    pub fn matrix(label: &str, n: usize, at: impl Fn(usize, usize) -> (Complex64, f64)) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let (v, s) = at(a, b);
                entries.push(Entry { a, b, re: v.re, im: v.im, stderr: s });
            }
        }
        Artifact::Matrix { label: label.to_string(), n, entries }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("artifact {0} does not exist")]
    Missing(PathBuf),
    #[error("artifact {path} is not readable: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSummary {
    /// Data rows written, header excluded.
    pub rows: usize,
    pub warnings: Vec<String>,
}

/// Renders an artifact as CSV text.
///
/// Ladders give `D,re,im,stderr` rows in increasing `D` followed by the fit
/// row with `D = inf`. Matrices give `a,b,re,im,stderr` rows in row-major
/// order.
pub fn render_csv(artifact: &Artifact) -> (String, PlotSummary) {
    let mut out = String::new();
    let mut warnings = Vec::new();
    let mut rows = 0;
    match artifact {
        Artifact::Ladder { label, rungs, fit } => {
            out.push_str("D,re,im,stderr\n");
            if rungs.is_empty() {
                warnings.push(format!("ladder `{label}` is empty"));
            }
            for r in rungs {
                out.push_str(&format!("{},{:.17e},{:.17e},{:.17e}\n", r.d, r.re, r.im, r.stderr));
                rows += 1;
            }
            match fit {
                Some(f) => {
                    out.push_str(&format!("inf,{:.17e},{:.17e},{:.17e}\n", f.re, f.im, f.stderr));
                    rows += 1;
                }
                None if !rungs.is_empty() => warnings.push(format!("ladder `{label}` has no fit")),
                None => {}
            }
        }
        Artifact::Matrix { entries, .. } => {
            out.push_str("a,b,re,im,stderr\n");
            for e in entries {
                out.push_str(&format!("{},{},{:.17e},{:.17e},{:.17e}\n", e.a, e.b, e.re, e.im, e.stderr));
                rows += 1;
            }
        }
    }
    (out, PlotSummary { rows, warnings })
}

/// Reads the artifact at `artifact` and writes its CSV to `csv`.
pub fn emit_plot_data(artifact: &Path, csv: &Path) -> Result<PlotSummary, PlotError> {
    let text = match fs::read_to_string(artifact) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(PlotError::Missing(artifact.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let parsed: Artifact = serde_json::from_str(&text)
        .map_err(|e| PlotError::Malformed { path: artifact.to_path_buf(), reason: e.to_string() })?;
    let (body, summary) = render_csv(&parsed);
    fs::write(csv, body)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rung(d: f64) -> Rung {
        Rung { d, re: 1.0 / d, im: 0.0, stderr: 0.01 }
    }

    #[test]
    fn ladder_rows_include_the_fit() {
        let fit = FitRow { re: 0.0, im: 0.0, stderr: 0.1, slope_re: 1.0, slope_im: 0.0, residual: 0.0 };
        let a = Artifact::Ladder { label: "l".into(), rungs: [4.0, 8.0, 16.0, 32.0].map(rung).to_vec(), fit: Some(fit) };
        let (csv, s) = render_csv(&a);
        assert_eq!(s.rows, 5);
        assert!(s.warnings.is_empty());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("4,"));
        assert!(lines[5].starts_with("inf,"));
    }

    #[test]
    fn empty_ladder_is_header_only_with_a_warning() {
        let a = Artifact::Ladder { label: "empty".into(), rungs: vec![], fit: None };
        let (csv, s) = render_csv(&a);
        assert_eq!(csv, "D,re,im,stderr\n");
        assert_eq!(s.rows, 0);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn matrix_rows_are_row_major() {
        let a = Artifact::matrix("m", 3, |a, b| (Complex64::new((3 * a + b) as f64, 0.0), 0.0));
        let (csv, s) = render_csv(&a);
        assert_eq!(s.rows, 9);
        let idx: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
        assert_eq!(idx, ["0,0", "0,1", "0,2", "1,0", "1,1", "1,2", "2,0", "2,1", "2,2"]);
    }

    #[test]
    fn artifacts_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let art = dir.path().join("ladder.json");
        let csv = dir.path().join("ladder.csv");
        assert!(matches!(emit_plot_data(&art, &csv), Err(PlotError::Missing(_))));
        let a = Artifact::Ladder { label: "l".into(), rungs: vec![rung(4.0)], fit: None };
        a.save(&art).unwrap();
        let s = emit_plot_data(&art, &csv).unwrap();
        assert_eq!(s.rows, 1);
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2);
        fs::write(&art, "not json").unwrap();
        assert!(matches!(emit_plot_data(&art, &csv), Err(PlotError::Malformed { .. })));
    }
}
