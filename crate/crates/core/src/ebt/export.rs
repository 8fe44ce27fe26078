use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{to_measures, CohortState, StepConfig, StepStats, Variant};
use crate::measures::io::{write_measure, IoError};
use crate::model::Problem;

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub problem: String,
    pub variant: Variant,
    pub dt: f64,
    pub substeps: usize,
    pub integrator_order: u8,
    pub clamp: bool,
    pub gamma: f64,
    pub a0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub stats: StepStats,
}

impl RunManifest {
    pub fn new(problem: &Problem, variant: Variant, cfg: &StepConfig, t_end: f64, stats: StepStats) -> Self {
        Self {
            problem: problem.name.clone(),
            variant,
            dt: cfg.dt,
            substeps: cfg.substeps,
            integrator_order: cfg.integrator_order,
            clamp: cfg.clamp,
            gamma: problem.kernel.gamma,
            a0: problem.kernel.a0,
            t_end,
            age_min: problem.age_min,
            age_max: problem.age_max,
            stats,
        }
    }
}

/// Writes `male.<ext>`, `female.<ext>`, `couples.<ext>` and `manifest.json`
/// into `dir`, creating it if needed. `ext` is `csv` or `json`.
pub fn write_snapshot(
    state: &CohortState,
    manifest: &RunManifest,
    dir: &Path,
    ext: &str,
) -> Result<(), IoError> {
    fs::create_dir_all(dir)?;
    let (m, f, c) = to_measures(state);
    write_measure(&m, &dir.join(format!("male.{ext}")))?;
    write_measure(&f, &dir.join(format!("female.{ext}")))?;
    write_measure(&c, &dir.join(format!("couples.{ext}")))?;
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}
