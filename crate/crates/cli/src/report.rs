//! Campaign reports: metric rows plus run metadata.
//!
//! The CSV form contains the header and one row per metric — nothing else —
//! so identical configurations produce byte-identical files.  The JSON form
//! mirrors the same rows and adds metadata (config hash, versions, wall
//! time); consumers comparing JSON reports must ignore `generated_at`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::builtins::BUILTINS_VERSION;

/// One measured metric with its pass criterion.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub check: String,
    pub group: String,
    pub level: u32,
    pub metric: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Calibration constant for one dual layer.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationRow {
    pub layer: String,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config_hash: String,
    pub crate_version: String,
    pub builtins_version: String,
    /// Unix seconds; excluded from determinism comparisons.
    pub generated_at: u64,
    pub calibration: Vec<CalibrationRow>,
    pub rows: Vec<MetricRow>,
}

impl Report {
    pub fn new(config_hash: String) -> Self {
        let generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            config_hash,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            builtins_version: BUILTINS_VERSION.to_string(),
            generated_at,
            calibration: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Record one metric; `pass` is `value <= tolerance` (NaN never passes).
    pub fn push(
        &mut self,
        check: &str,
        group: &str,
        level: u32,
        metric: &str,
        value: f64,
        tolerance: f64,
    ) {
        self.rows.push(MetricRow {
            check: check.into(),
            group: group.into(),
            level,
            metric: metric.into(),
            value,
            tolerance,
            pass: value.is_finite() && value <= tolerance,
        });
    }

    pub fn push_calibration(&mut self, layer: &str, multiplier: f64) {
        self.calibration.push(CalibrationRow { layer: layer.into(), multiplier });
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,group,level,metric,value,tolerance,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.12e},{:.12e},{}",
                r.check, r.group, r.level, r.metric, r.value, r.tolerance, r.pass
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render(&self, format: &str) -> String {
        if format == "json" {
            self.to_json()
        } else {
            self.to_csv()
        }
    }

    pub fn write(&self, path: &Path, format: &str) -> Result<()> {
        std::fs::write(path, self.render(format))
            .with_context(|| format!("cannot write report {}", path.display()))
    }

    /// Console summary: one line per metric plus a verdict.
    pub fn print_summary(&self) {
        for r in &self.rows {
            println!(
                "{:4} {:<28} {:<24} level {}  {:>12.3e}  (tol {:.1e})",
                if r.pass { "ok" } else { "FAIL" },
                r.check,
                format!("{} {}", r.group, r.metric),
                r.level,
                r.value,
                r.tolerance
            );
        }
        for c in &self.calibration {
            println!("     calibration {:<24} multiplier {:.6}", c.layer, c.multiplier);
        }
    }
}
