//! Report bundles: CSV tables, JSON sidecars and the run summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::density::DensityEstimate;
use crate::error::{Error, Result};
use crate::harness::rate::{RateFit, RateTable};

/// Artifact version recorded in every report.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// RFC 4180 CSV with LF line endings; floats use shortest round-trip
/// formatting.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[derive(Serialize)]
struct DensityRow<'a> {
    y: f64,
    p_hat: f64,
    stderr: f64,
    method: &'a str,
}

pub fn density_csv(est: &DensityEstimate) -> Result<Vec<u8>> {
    let method = est.method.to_string();
    let rows: Vec<DensityRow> = est
        .query_points
        .iter()
        .zip(&est.values)
        .zip(&est.stderr)
        .map(|((&y, &p_hat), &stderr)| DensityRow {
            y,
            p_hat,
            stderr,
            method: &method,
        })
        .collect();
    csv_bytes(&rows)
}

pub fn rate_csv(table: &RateTable) -> Result<Vec<u8>> {
    csv_bytes(&table.rows)
}

/// JSON sidecar of a rate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSidecar {
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub slope_ci: Option<[f64; 2]>,
    pub r_squared: Option<f64>,
    pub exact: bool,
    pub seed: u64,
    pub config_hash: String,
}

impl RateSidecar {
    pub fn new(table: &RateTable, config_hash: &str) -> Self {
        let f: Option<&RateFit> = table.fit.as_ref();
        Self {
            slope: f.map(|f| f.slope),
            slope_stderr: f.map(|f| f.slope_stderr),
            slope_ci: f.map(|f| f.slope_ci),
            r_squared: f.map(|f| f.r_squared),
            exact: table.exact,
            seed: table.seed,
            config_hash: config_hash.to_string(),
        }
    }
}

/// Outcome of one configured threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: threshold.into(),
            passed,
        }
    }

    pub fn in_range(name: &str, value: f64, [lo, hi]: [f64; 2]) -> Self {
        Self::new(name, value, format!("[{lo}, {hi}]"), (lo..=hi).contains(&value))
    }

    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Self::new(name, value, format!(">= {min}"), value >= min)
    }

    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Self::new(name, value, format!("<= {max}"), value <= max)
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, "true", ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Counters {
    pub degenerate_samples: u64,
    pub localization_activations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub counters: Counters,
    pub exact: bool,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub files: Vec<String>,
    pub results: serde_json::Value,
}

/// Everything a run produces, before it is written.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub csv: Vec<(String, Vec<u8>)>,
    pub json: Vec<(String, serde_json::Value)>,
    pub summary: Summary,
}

impl ReportBundle {
    /// Writes every file into `dir` (created if needed) and returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, bytes) in &self.csv {
            let p = dir.join(name);
            fs::write(&p, bytes)?;
            out.push(p);
        }
        for (name, value) in &self.json {
            let p = dir.join(name);
            fs::write(&p, pretty(value)?)?;
            out.push(p);
        }
        let p = dir.join("summary.json");
        fs::write(&p, pretty(&self.summary)?)?;
        out.push(p);
        Ok(out)
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}
