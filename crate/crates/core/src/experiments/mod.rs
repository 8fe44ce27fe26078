//! Convergence studies: reference solutions, errors at the final time in the
//! flat surrogate and in total variation, and order estimates.

mod table;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ebt::{run, to_measures, CohortState, EbtError, StepConfig, Variant};
use crate::measures::{
    rho_distance, rho_grid, rho_grid_exact, tv_distance, AtomicMeasure, GridMeasure2d, GroundNorm, MeasureError,
    RhoSolver, SinkhornConfig, DEFAULT_LP_CAP,
};
use crate::model::{ExactSolution, Problem};
use crate::quadrature::{integrate, integrate_2d};

pub use table::{format_sig, StudyTable};

/// Tolerance of the cell integrals used to atomize exact solutions.
pub const ATOMIZE_TOL: f64 = 1e-10;
/// Largest tensor grid the couples metric will build.
pub const GRID_CELL_CAP: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Ebt(#[from] EbtError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("time {t} is outside the validity interval {valid:?} of the exact solution")]
    OutsideValidity { t: f64, valid: (f64, f64) },
    #[error("final time {got} does not match reference time {expected}")]
    TimeMismatch { got: f64, expected: f64 },
    #[error("dt list must be non-empty and strictly decreasing")]
    BadDtList,
    #[error("problem {0:?} has no exact solution")]
    NoExactSolution(String),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Uniform age cells `[lo + k·width, lo + (k+1)·width)`, `k < cells`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGrid {
    pub lo: f64,
    pub width: f64,
    pub cells: usize,
}

impl AgeGrid {
    fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width
    }

    /// The grid a run with cohort width `dt` lives on at time `t`.
    pub fn at_time(problem: &Problem, dt: f64, t: f64) -> Self {
        let span = t + problem.age_max;
        Self {
            lo: 0.0,
            width: dt,
            cells: (span / dt).round() as usize,
        }
    }
}

/// Cell masses located at cell barycenters (0 for empty cells) of the exact
/// densities at time `t`.
pub fn atomize_exact(
    exact: &ExactSolution,
    t: f64,
    grid: &AgeGrid,
) -> Result<(AtomicMeasure, AtomicMeasure, AtomicMeasure)> {
    let (t0, t1) = exact.valid_t;
    if !(t0..=t1).contains(&t) {
        return Err(ExperimentError::OutsideValidity { t, valid: exact.valid_t });
    }
    let one_d = |u: &(dyn Fn(f64, f64) -> f64 + Send + Sync)| -> Result<AtomicMeasure> {
        let (coords, weights): (Vec<f64>, Vec<f64>) = (0..grid.cells)
            .map(|k| {
                let (a, b) = (grid.edge(k), grid.edge(k + 1));
                let m = integrate(|x| u(t, x), a, b, ATOMIZE_TOL);
                let x = if m == 0.0 {
                    0.0
                } else {
                    integrate(|x| x * u(t, x), a, b, ATOMIZE_TOL) / m
                };
                (x, m)
            })
            .unzip();
        Ok(AtomicMeasure::new(1, coords, weights)?)
    };
    let male = one_d(&*exact.u_m)?;
    let female = one_d(&*exact.u_f)?;
    let n = grid.cells;
    let cells: Vec<(f64, f64, f64)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let xr = (grid.edge(i), grid.edge(i + 1));
            let yr = (grid.edge(j), grid.edge(j + 1));
            let u = |x, y| (exact.u_c)(t, x, y);
            let m = integrate_2d(u, xr, yr, ATOMIZE_TOL);
            if m == 0.0 {
                return (0.0, 0.0, 0.0);
            }
            let mx = integrate_2d(|x, y| x * u(x, y), xr, yr, ATOMIZE_TOL);
            let my = integrate_2d(|x, y| y * u(x, y), xr, yr, ATOMIZE_TOL);
            (mx / m, my / m, m)
        })
        .collect();
    let coords = cells.iter().flat_map(|&(x, y, _)| [x, y]).collect();
    let weights = cells.iter().map(|c| c.2).collect();
    let couples = AtomicMeasure::new(2, coords, weights)?;
    Ok((male, female, couples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ReferenceKind {
    Exact,
    SelfRefined { dt_ref: f64, substeps: usize },
}

/// Measures at the final time that a run is compared with.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub kind: ReferenceKind,
    pub t: f64,
    pub male: AtomicMeasure,
    pub female: AtomicMeasure,
    pub couples: AtomicMeasure,
}

impl ReferenceSolution {
    pub fn exact(problem: &Problem, dt: f64, t: f64) -> Result<Self> {
        let exact = problem
            .exact
            .as_ref()
            .ok_or_else(|| ExperimentError::NoExactSolution(problem.name.clone()))?;
        let (male, female, couples) = atomize_exact(exact, t, &AgeGrid::at_time(problem, dt, t))?;
        Ok(Self {
            kind: ReferenceKind::Exact,
            t,
            male,
            female,
            couples,
        })
    }

    pub fn from_state(state: &CohortState, kind: ReferenceKind) -> Self {
        let (male, female, couples) = to_measures(state);
        Self {
            kind,
            t: state.t,
            male,
            female,
            couples,
        }
    }

    pub fn self_refined(problem: &Problem, variant: Variant, cfg: &StepConfig, t: f64) -> Result<Self> {
        let out = run(problem, variant, cfg, t)?;
        Ok(Self::from_state(
            &out.state,
            ReferenceKind::SelfRefined {
                dt_ref: cfg.dt,
                substeps: cfg.substeps,
            },
        ))
    }
}

/// How the couples (2-D) part of the flat surrogate is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplesSolver {
    /// Exact min-cost flow on the merged tensor grid (Manhattan cost),
    /// falling back to the atomic solvers when the atoms do not fit a grid
    /// of manageable size.
    Grid,
    /// Sinkhorn on the merged tensor grid, Manhattan cost.
    GridSinkhorn,
    /// Dense log-domain Sinkhorn on the atoms, Manhattan cost.
    Sinkhorn,
    /// Network simplex, Manhattan cost.
    ExactLp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub couples: CouplesSolver,
    pub sinkhorn: SinkhornConfig,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            couples: CouplesSolver::Grid,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

/// Per-population errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub flat: [f64; 3],
    pub tv: [f64; 3],
}

impl ErrorReport {
    pub fn err_flat(&self) -> f64 {
        self.flat.iter().sum()
    }

    pub fn err_tv(&self) -> f64 {
        self.tv.iter().sum()
    }
}

/// ρ between couple measures under the Manhattan cost.
pub fn couples_rho(a: &AtomicMeasure, b: &AtomicMeasure, metric: &MetricConfig) -> Result<f64> {
    let (a, b) = (a.without_zero_atoms(), b.without_zero_atoms());
    let atomic = |solver| rho_distance(&a, &b, solver, GroundNorm::Manhattan);
    let value = match metric.couples {
        CouplesSolver::ExactLp => atomic(RhoSolver::ExactLp)?,
        CouplesSolver::Sinkhorn => atomic(RhoSolver::Sinkhorn(metric.sinkhorn))?,
        CouplesSolver::Grid | CouplesSolver::GridSinkhorn => {
            let grids = GridMeasure2d::from_atomic(&a, GRID_CELL_CAP)
                .and_then(|p| Ok((p, GridMeasure2d::from_atomic(&b, GRID_CELL_CAP)?)));
            match grids {
                Ok((p, q)) if metric.couples == CouplesSolver::Grid => rho_grid_exact(&p, &q)?,
                Ok((p, q)) => rho_grid(&p, &q, &metric.sinkhorn)?,
                Err(MeasureError::SupportTooLarge { .. }) if a.len() * b.len() <= DEFAULT_LP_CAP => {
                    atomic(RhoSolver::ExactLp)?
                }
                Err(MeasureError::SupportTooLarge { .. }) => {
                    atomic(RhoSolver::Sinkhorn(metric.sinkhorn))?
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    Ok(value)
}

/// Errors of three measures against three others: ρ per population (exact
/// W₁ on the line, [`couples_rho`] in the plane) and TV.
pub fn measure_errors(
    numeric: (&AtomicMeasure, &AtomicMeasure, &AtomicMeasure),
    reference: (&AtomicMeasure, &AtomicMeasure, &AtomicMeasure),
    metric: &MetricConfig,
) -> Result<ErrorReport> {
    let rho_1d = |a: &AtomicMeasure, b: &AtomicMeasure| {
        rho_distance(a, b, RhoSolver::Exact1d, GroundNorm::Euclidean)
    };
    Ok(ErrorReport {
        flat: [
            rho_1d(numeric.0, reference.0)?,
            rho_1d(numeric.1, reference.1)?,
            couples_rho(numeric.2, reference.2, metric)?,
        ],
        tv: [
            tv_distance(numeric.0, reference.0)?,
            tv_distance(numeric.1, reference.1)?,
            tv_distance(numeric.2, reference.2)?,
        ],
    })
}

/// Error of a final state against a reference at the same time.
pub fn error_at_t(
    state: &CohortState,
    reference: &ReferenceSolution,
    metric: &MetricConfig,
) -> Result<ErrorReport> {
    if (state.t - reference.t).abs() > 1e-9 {
        return Err(ExperimentError::TimeMismatch {
            got: state.t,
            expected: reference.t,
        });
    }
    let (m, f, c) = to_measures(state);
    measure_errors(
        (&m, &f, &c),
        (&reference.male, &reference.female, &reference.couples),
        metric,
    )
}

/// `q_k = log(e_{k−1}/e_k) / log(dt_{k−1}/dt_k)`, i.e. `log₂` of the error
/// ratio for halved steps. The first entry and entries touching a zero or
/// non-finite error are `None`.
pub fn order_estimate(rows: &[(f64, f64)]) -> Vec<Option<f64>> {
    let mut q = vec![None];
    for w in rows.windows(2) {
        let ((dt0, e0), (dt1, e1)) = (w[0], w[1]);
        let ok = e0 > 0.0 && e1 > 0.0 && e0.is_finite() && e1.is_finite() && dt0 != dt1;
        q.push(ok.then(|| (e0 / e1).ln() / (dt0 / dt1).ln()));
    }
    q.truncate(rows.len());
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// The exact solution atomized on each run's own grid.
    Exact,
    /// One run at half the smallest tabulated step.
    FixedFinest,
    /// Each run against the run at half its step.
    Successive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub variant: Variant,
    pub substeps: usize,
    pub integrator_order: u8,
    pub reference: ReferenceMode,
    pub reference_substeps: usize,
    pub metric: MetricConfig,
}

impl StudyConfig {
    /// Exact reference when the problem has one, else a single finest run.
    pub fn for_problem(problem: &Problem) -> Self {
        Self {
            variant: Variant::Simplified,
            substeps: 8,
            integrator_order: 4,
            reference: if problem.exact.is_some() {
                ReferenceMode::Exact
            } else {
                ReferenceMode::FixedFinest
            },
            reference_substeps: 16,
            metric: MetricConfig::default(),
        }
    }

    fn step(&self, dt: f64) -> StepConfig {
        StepConfig {
            dt,
            substeps: self.substeps,
            integrator_order: self.integrator_order,
            clamp: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub err_flat: f64,
    pub err_tv: f64,
    pub q: Option<f64>,
    pub errors: ErrorReport,
    pub wall_seconds: f64,
}

/// Runs every `dt`, measures it against the configured reference at the
/// problem's horizon and estimates orders. Rows run concurrently on the
/// current rayon pool.
pub fn convergence_study(problem: &Problem, dt_list: &[f64], cfg: &StudyConfig) -> Result<StudyTable> {
    if dt_list.is_empty() || dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ExperimentError::BadDtList);
    }
    let t_end = problem.t_end;
    let started = Instant::now();
    let dt_min = *dt_list.last().unwrap();
    let fixed = match cfg.reference {
        ReferenceMode::FixedFinest => {
            let step = cfg.step(dt_min / 2.0).with_substeps(cfg.reference_substeps);
            Some(ReferenceSolution::self_refined(problem, cfg.variant, &step, t_end)?)
        }
        _ => None,
    };
    let reference_seconds = started.elapsed().as_secs_f64();

    let errors: Vec<(ErrorReport, f64)> = dt_list
        .par_iter()
        .map(|&dt| {
            let t0 = Instant::now();
            let state = run(problem, cfg.variant, &cfg.step(dt), t_end)?.state;
            let reference = match cfg.reference {
                ReferenceMode::Exact => ReferenceSolution::exact(problem, dt, t_end)?,
                ReferenceMode::FixedFinest => fixed.clone().expect("built above"),
                ReferenceMode::Successive => ReferenceSolution::self_refined(
                    problem,
                    cfg.variant,
                    &cfg.step(dt / 2.0),
                    t_end,
                )?,
            };
            let report = error_at_t(&state, &reference, &cfg.metric)?;
            Ok((report, t0.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let q = order_estimate(
        &dt_list
            .iter()
            .zip(&errors)
            .map(|(&dt, (e, _))| (dt, e.err_flat()))
            .collect::<Vec<_>>(),
    );
    let rows = dt_list
        .iter()
        .zip(errors)
        .zip(q)
        .map(|((&dt, (errors, wall_seconds)), q)| ConvergenceRow {
            dt,
            err_flat: errors.err_flat(),
            err_tv: errors.err_tv(),
            q,
            errors,
            wall_seconds,
        })
        .collect();
    Ok(StudyTable {
        problem: problem.name.clone(),
        gamma: problem.kernel.gamma,
        a0: problem.kernel.a0,
        t_end,
        config: *cfg,
        reference_dt: fixed.map(|_| dt_min / 2.0),
        reference_seconds,
        rows,
    })
}

/// `count` successive halvings starting at `dt0`.
pub fn halving_list(dt0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| dt0 / (1u64 << k) as f64).collect()
}
