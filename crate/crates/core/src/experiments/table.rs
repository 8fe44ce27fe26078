use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConvergenceRow, ExperimentError, Result, StudyConfig};

/// Significant digits written to `table.csv`.
pub const CSV_DIGITS: usize = 10;

/// `v` in scientific notation with `digits` significant digits.
pub fn format_sig(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), v)
}

/// Result of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub problem: String,
    pub gamma: f64,
    pub a0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub config: StudyConfig,
    /// Step of the fixed self-refined reference, if one was used.
    pub reference_dt: Option<f64>,
    pub reference_seconds: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl StudyTable {
    /// `dt,err_flat,err_tv,q`; `q` is empty on the first row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,err_flat,err_tv,q\n");
        for r in &self.rows {
            let q = r.q.map(|q| format_sig(q, CSV_DIGITS)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                format_sig(r.dt, CSV_DIGITS),
                format_sig(r.err_flat, CSV_DIGITS),
                format_sig(r.err_tv, CSV_DIGITS),
                q
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:>12}  {:>12}  {:>12}  {:>7}\n", "dt", "err_flat", "err_tv", "q");
        for r in &self.rows {
            let q = r.q.map(|q| format!("{q:.3}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:>12.4e}  {:>12.4e}  {:>12.4e}  {:>7}",
                r.dt, r.err_flat, r.err_tv, q
            );
        }
        out
    }

    /// Writes `table.csv`, `table.txt` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| ExperimentError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("table.csv"), self.to_csv()).map_err(io)?;
        fs::write(dir.join("table.txt"), self.to_text()).map_err(io)?;
        let json = serde_json::to_string_pretty(self).map_err(|e| ExperimentError::Io(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json + "\n").map_err(io)?;
        Ok(())
    }
}
