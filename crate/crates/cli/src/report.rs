//! JSON reports, CSV projections and atomic file output.

use crate::config::Job;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Inconclusive => 2,
        }
    }
}

/// Comparison of a computed value with a closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub stderr: f64,
    /// Relative tolerance; the check also allows 5 stderr.
    pub tolerance: f64,
    pub pass: bool,
}

impl Baseline {
    pub fn new(name: &str, expected: f64, observed: f64, stderr: f64, tolerance: f64) -> Self {
        let slack = (tolerance * expected.abs()).max(5.0 * stderr);
        Self {
            name: name.to_string(),
            expected,
            observed,
            stderr,
            tolerance,
            pass: (observed - expected).abs() <= slack,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub inputs: Job,
    pub status: Status,
    pub results: Vec<serde_json::Value>,
    pub baselines_checked: Vec<Baseline>,
    #[serde(default)]
    pub cached: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Writes through a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Rows for one CSV projection.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

pub(crate) fn direction_header(dim: usize, lead: &[&str], tail: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|i| format!("xi{i}")))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}
