//! Line-delimited JSON run records and speedup tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub algorithm: String,
    pub scheduler: String,
    pub model: String,
    pub workers: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub updates: u64,
    pub converged: bool,
    pub objective: Option<f64>,
    pub residual: Option<f64>,
    /// Hash of the final payload values, for determinism checks.
    pub digest: String,
    /// Algorithm-specific numbers (marginal error, colors, lambda ...).
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
}

impl BenchReport {
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("records serialize"));
            s.push('\n');
        }
        s
    }

    /// Parses records, skipping blank lines. Each line stands alone, so
    /// reports from several runs can be concatenated.
    pub fn from_json_lines(text: &str) -> Result<Self, serde_json::Error> {
        let records =
            text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(BenchReport { records })
    }

    /// Appends one line per record.
    pub fn append_to(&self, path: &Path) -> io::Result<()> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(self.to_json_lines().as_bytes())
    }

    /// Fastest single-worker wall time across all records.
    pub fn baseline(&self) -> Option<f64> {
        self.records.iter().filter(|r| r.workers == 1).map(|r| r.wall_time_s).min_by(f64::total_cmp)
    }

    /// `baseline / wall_time` per record, in record order.
    pub fn speedups(&self) -> Vec<Option<f64>> {
        let base = self.baseline();
        self.records.iter().map(|r| base.map(|b| b / r.wall_time_s)).collect()
    }

    pub fn speedup_table(&self) -> String {
        let mut s =
            String::from("algorithm  scheduler        model   workers   wall_s      updates  converged  speedup\n");
        for (r, sp) in self.records.iter().zip(self.speedups()) {
            let sp = sp.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
            let _ = writeln!(
                s,
                "{:<10} {:<16} {:<7} {:>7} {:>8.4} {:>12} {:>10} {:>8}",
                r.algorithm, r.scheduler, r.model, r.workers, r.wall_time_s, r.updates, r.converged, sp
            );
        }
        s
    }
}
