//! Cohort state and time stepping for the simplified and original EBT
//! schemes.
//!
//! Cohorts are stored youngest first: storage index `k = i − B`, so `k = 0`
//! is the boundary cohort and the couple grid is dense `n × n` with the male
//! cohort as row. Every internalization prepends one row and one column.

mod export;
mod rhs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::AtomicMeasure;
use crate::model::Problem;
use crate::quadrature::{integrate, integrate_2d};

pub use export::{write_snapshot, RunManifest};
pub use rhs::{rhs_original, rhs_simplified, Packed};

/// Absolute tolerance of the cell integrals taken at initialization.
pub const INIT_QUAD_TOL: f64 = 1e-10;
/// Mass below `−NEGATIVE_TOL` before clamping counts as an excursion.
pub const NEGATIVE_TOL: f64 = 1e-10;
/// Couple masses below this carry moments that are pure rounding noise; such
/// cohorts are placed at their male and female cohorts' locations instead.
pub const MOMENT_MASS_TOL: f64 = 1e-15;
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EbtError {
    #[error("dt exceeds a0: dt = {dt} > a0 = {a0}; the scheme requires Δt ≤ a₀")]
    DtExceedsA0 { dt: f64, a0: f64 },
    #[error("{what} = {value} is not an integer multiple of dt = {dt}")]
    NotDivisible { what: &'static str, value: f64, dt: f64 },
    #[error("initial {population} density is nonzero at age {age}, outside [{min}, {max})")]
    SupportEscapesGrid {
        population: &'static str,
        age: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid step configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, EbtError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Simplified,
    Original,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simplified" => Ok(Self::Simplified),
            "original" => Ok(Self::Original),
            _ => Err(format!("unknown variant {s:?}; use simplified or original")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Simplified => "simplified",
            Self::Original => "original",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Macro step, equal to the cohort width.
    pub dt: f64,
    /// Fixed integrator steps per macro step.
    pub substeps: usize,
    /// 1 for explicit Euler, 4 for classical Runge–Kutta.
    pub integrator_order: u8,
    /// Clamp masses at zero after every substep.
    pub clamp: bool,
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            substeps: 8,
            integrator_order: 4,
            clamp: true,
        }
    }

    pub fn with_substeps(self, substeps: usize) -> Self {
        Self { substeps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EbtError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(EbtError::InvalidConfig("substeps must be positive".into()));
        }
        if !matches!(self.integrator_order, 1 | 4) {
            return Err(EbtError::InvalidConfig(format!(
                "integrator order must be 1 or 4, got {}",
                self.integrator_order
            )));
        }
        Ok(())
    }
}

/// Full scheme state at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortState {
    pub t: f64,
    pub variant: Variant,
    /// Index of the oldest cohort.
    pub j_max: i64,
    /// Index of the boundary cohort.
    pub b: i64,
    pub male_m: Vec<f64>,
    pub male_x: Vec<f64>,
    pub female_m: Vec<f64>,
    pub female_y: Vec<f64>,
    pub couple_m: Vec<f64>,
    pub couple_x: Vec<f64>,
    pub couple_y: Vec<f64>,
    /// First moments of the boundary cohorts (original scheme).
    pub pi_m: f64,
    pub pi_f: f64,
    /// Couple first moments `x̃ = x·m`, `ỹ = y·m` (original scheme; empty otherwise).
    pub couple_xt: Vec<f64>,
    pub couple_yt: Vec<f64>,
}

/// Counters collected while stepping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub macro_steps: usize,
    /// Substep masses that fell below `−NEGATIVE_TOL` before clamping.
    pub negative_excursions: usize,
    /// Most negative mass seen after any substep (0 if none).
    pub min_mass: f64,
}

impl StepStats {
    fn merge(&mut self, other: StepStats) {
        self.macro_steps += other.macro_steps;
        self.negative_excursions += other.negative_excursions;
        self.min_mass = self.min_mass.min(other.min_mass);
    }
}

impl CohortState {
    /// Number of cohorts per population, `J − B + 1`.
    pub fn len(&self) -> usize {
        self.male_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.male_m.is_empty()
    }

    pub fn male_total(&self) -> f64 {
        self.male_m.iter().sum()
    }

    pub fn female_total(&self) -> f64 {
        self.female_m.iter().sum()
    }

    pub fn couple_total(&self) -> f64 {
        self.couple_m.iter().sum()
    }

    /// Location of male cohort `k`. In the original scheme the boundary
    /// cohort sits at its mean age `Π/m`.
    fn boundary_location(pi: f64, m: f64) -> f64 {
        if m == 0.0 {
            0.0
        } else {
            pi / m
        }
    }

    /// Rebuilds couple locations from the first moments (original scheme).
    fn sync_original_locations(&mut self) {
        self.male_x[0] = Self::boundary_location(self.pi_m, self.male_m[0]);
        self.female_y[0] = Self::boundary_location(self.pi_f, self.female_m[0]);
        let cols = self.female_y.len();
        for k in 0..self.couple_m.len() {
            let m = self.couple_m[k];
            let (x, y) = if m == 0.0 {
                (0.0, 0.0)
            } else if m < MOMENT_MASS_TOL {
                (self.male_x[k / cols], self.female_y[k % cols])
            } else {
                (self.couple_xt[k] / m, self.couple_yt[k] / m)
            };
            self.couple_x[k] = x;
            self.couple_y[k] = y;
        }
    }
}

fn cell_count(span: f64, dt: f64, what: &'static str) -> Result<usize> {
    let n = span / dt;
    let r = n.round();
    if (n - r).abs() > GRID_TOL * n.max(1.0) {
        return Err(EbtError::NotDivisible { what, value: span, dt });
    }
    Ok(r as usize)
}

fn check_support(
    population: &'static str,
    f: &dyn Fn(f64) -> f64,
    min: f64,
    max: f64,
) -> Result<()> {
    // Sample just beyond both ends of the grid.
    for k in 0..64 {
        let off = (k as f64 + 0.5) / 64.0;
        let mut ages = vec![max + off * (max - min)];
        if min > 0.0 {
            ages.push(min * (1.0 - off));
        }
        for age in ages {
            if f(age) != 0.0 {
                return Err(EbtError::SupportEscapesGrid { population, age, min, max });
            }
        }
    }
    Ok(())
}

/// Internal cohorts at `t = 0`: cell integrals of the initial densities over
/// `[age_min, age_max)` cut into cells of width `dt`, located at the cell
/// barycenters (0 for empty cells). Couples sit at `(x_i^m, y_j^f)`. The
/// returned state has `B = 1`, so attaching the first boundary makes it 0.
pub fn init_internal(problem: &Problem, dt: f64, variant: Variant) -> Result<CohortState> {
    let (lo, hi) = (problem.age_min, problem.age_max);
    let n = cell_count(hi - lo, dt, "age_max - age_min")?;
    let init = &problem.initial;
    check_support("male", &*init.u_m, lo, hi)?;
    check_support("female", &*init.u_f, lo, hi)?;
    check_support("couple", &|x| (init.u_c)(x, 0.5 * (lo + hi)), lo, hi)?;
    check_support("couple", &|y| (init.u_c)(0.5 * (lo + hi), y), lo, hi)?;

    let edge = |k: usize| lo + k as f64 * dt;
    let cohorts = |u: &(dyn Fn(f64) -> f64 + Send + Sync)| -> (Vec<f64>, Vec<f64>) {
        (0..n)
            .map(|k| {
                let (a, b) = (edge(k), edge(k + 1));
                let m = integrate(u, a, b, INIT_QUAD_TOL);
                let x = if m == 0.0 {
                    0.0
                } else {
                    integrate(|x| x * u(x), a, b, INIT_QUAD_TOL) / m
                };
                (m, x)
            })
            .unzip()
    };
    let (male_m, male_x) = cohorts(&*init.u_m);
    let (female_m, female_y) = cohorts(&*init.u_f);
    let mut couple_m = vec![0.0; n * n];
    let mut couple_x = vec![0.0; n * n];
    let mut couple_y = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            couple_m[k] = integrate_2d(
                |x, y| (init.u_c)(x, y),
                (edge(i), edge(i + 1)),
                (edge(j), edge(j + 1)),
                INIT_QUAD_TOL,
            );
            couple_x[k] = male_x[i];
            couple_y[k] = female_y[j];
        }
    }
    let (couple_xt, couple_yt) = match variant {
        Variant::Simplified => (Vec::new(), Vec::new()),
        Variant::Original => (
            couple_m.iter().zip(&couple_x).map(|(m, x)| m * x).collect(),
            couple_m.iter().zip(&couple_y).map(|(m, y)| m * y).collect(),
        ),
    };
    Ok(CohortState {
        t: 0.0,
        variant,
        j_max: n as i64,
        b: 1,
        male_m,
        male_x,
        female_m,
        female_y,
        couple_m,
        couple_x,
        couple_y,
        pi_m: 0.0,
        pi_f: 0.0,
        couple_xt,
        couple_yt,
    })
}

fn prepend_grid(old: &[f64], n: usize, fill: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let m = n + 1;
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = if i == 0 || j == 0 {
                fill(i, j)
            } else {
                old[(i - 1) * n + (j - 1)]
            };
        }
    }
    out
}

/// Prepends empty boundary cohorts at age 0. New couple cohorts sit at
/// `(x_i^m, y_j^f)` in the simplified scheme and at `(0, 0)` in the
/// original one. `B` decreases by one.
pub fn attach_boundary(state: &CohortState) -> CohortState {
    let n = state.len();
    let mut male_x = Vec::with_capacity(n + 1);
    male_x.push(0.0);
    male_x.extend_from_slice(&state.male_x);
    let mut female_y = Vec::with_capacity(n + 1);
    female_y.push(0.0);
    female_y.extend_from_slice(&state.female_y);
    let prepend = |v: &[f64]| {
        let mut out = Vec::with_capacity(v.len() + 1);
        out.push(0.0);
        out.extend_from_slice(v);
        out
    };
    let zero = |_: usize, _: usize| 0.0;
    let (couple_x, couple_y) = match state.variant {
        Variant::Simplified => (
            prepend_grid(&state.couple_x, n, |i, _| male_x[i]),
            prepend_grid(&state.couple_y, n, |_, j| female_y[j]),
        ),
        Variant::Original => (
            prepend_grid(&state.couple_x, n, zero),
            prepend_grid(&state.couple_y, n, zero),
        ),
    };
    let (couple_xt, couple_yt) = match state.variant {
        Variant::Simplified => (Vec::new(), Vec::new()),
        Variant::Original => (
            prepend_grid(&state.couple_xt, n, zero),
            prepend_grid(&state.couple_yt, n, zero),
        ),
    };
    CohortState {
        t: state.t,
        variant: state.variant,
        j_max: state.j_max,
        b: state.b - 1,
        male_m: prepend(&state.male_m),
        male_x,
        female_m: prepend(&state.female_m),
        female_y,
        couple_m: prepend_grid(&state.couple_m, n, zero),
        couple_x,
        couple_y,
        pi_m: 0.0,
        pi_f: 0.0,
        couple_xt,
        couple_yt,
    }
}

fn rk_step(
    f: &dyn Fn(f64, &[f64], &mut [f64]),
    order: u8,
    s: f64,
    h: f64,
    y: &mut [f64],
    scratch: &mut [Vec<f64>; 5],
) {
    let [k1, k2, k3, k4, tmp] = scratch;
    f(s, y, k1);
    if order == 1 {
        y.iter_mut().zip(k1.iter()).for_each(|(v, d)| *v += h * d);
        return;
    }
    let stage = |tmp: &mut Vec<f64>, y: &[f64], k: &[f64], c: f64| {
        tmp.iter_mut()
            .zip(y.iter().zip(k))
            .for_each(|(t, (v, d))| *t = v + c * d);
    };
    stage(tmp, y, k1, 0.5 * h);
    f(s + 0.5 * h, tmp, k2);
    stage(tmp, y, k2, 0.5 * h);
    f(s + 0.5 * h, tmp, k3);
    stage(tmp, y, k3, h);
    f(s + h, tmp, k4);
    for (idx, v) in y.iter_mut().enumerate() {
        *v += h / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
    }
}

/// Integrates one macro step `[t_n, t_n + dt]`, internalizes the boundary
/// cohorts and attaches fresh ones.
pub fn macro_step(
    state: &CohortState,
    problem: &Problem,
    cfg: &StepConfig,
) -> Result<(CohortState, StepStats)> {
    cfg.validate()?;
    let packed = Packed::new(state);
    let mut y = packed.pack(state);
    let len = y.len();
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; len]);
    let h = cfg.dt / cfg.substeps as f64;
    let mut stats = StepStats {
        macro_steps: 1,
        ..Default::default()
    };
    let f = |tau: f64, y: &[f64], dy: &mut [f64]| match state.variant {
        Variant::Simplified => rhs_simplified(&packed, problem, tau, y, dy),
        Variant::Original => rhs_original(&packed, problem, tau, y, dy),
    };
    for sub in 0..cfg.substeps {
        rk_step(&f, cfg.integrator_order, sub as f64 * h, h, &mut y, &mut scratch);
        for k in packed.mass_indices() {
            let v = y[k];
            if v < 0.0 {
                stats.min_mass = stats.min_mass.min(v);
                if v < -NEGATIVE_TOL {
                    stats.negative_excursions += 1;
                }
                if cfg.clamp {
                    y[k] = 0.0;
                    packed.clear_moments(k, &mut y);
                }
            }
        }
    }
    let mut next = packed.unpack(state, &y, cfg.dt);
    next.t = state.t + cfg.dt;
    Ok((attach_boundary(&next), stats))
}

/// Final state and counters of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: CohortState,
    pub stats: StepStats,
}

/// `T/dt` macro steps from the initial cohorts with boundaries attached.
pub fn run(problem: &Problem, variant: Variant, cfg: &StepConfig, t_end: f64) -> Result<RunOutput> {
    run_with(problem, variant, cfg, t_end, |_| {})
}

/// As [`run`], calling `observe` on the state after every macro step.
pub fn run_with(
    problem: &Problem,
    variant: Variant,
    cfg: &StepConfig,
    t_end: f64,
    mut observe: impl FnMut(&CohortState),
) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.dt > problem.kernel.a0 {
        return Err(EbtError::DtExceedsA0 {
            dt: cfg.dt,
            a0: problem.kernel.a0,
        });
    }
    let steps = cell_count(t_end, cfg.dt, "T")?;
    let mut state = attach_boundary(&init_internal(problem, cfg.dt, variant)?);
    let mut stats = StepStats::default();
    for n in 0..steps {
        let (next, s) = macro_step(&state, problem, cfg)?;
        state = next;
        // Pin the clock to the grid so that no drift accumulates.
        state.t = (n + 1) as f64 * cfg.dt;
        stats.merge(s);
        observe(&state);
    }
    Ok(RunOutput { state, stats })
}

/// `(ν^m, ν^f, ν^c)`: one atom per cohort, zero masses retained.
pub fn to_measures(state: &CohortState) -> (AtomicMeasure, AtomicMeasure, AtomicMeasure) {
    let one_d = |m: &[f64], x: &[f64]| {
        AtomicMeasure::new(1, x.to_vec(), m.to_vec()).expect("cohort masses are nonnegative")
    };
    let coords = state
        .couple_x
        .iter()
        .zip(&state.couple_y)
        .flat_map(|(&x, &y)| [x, y])
        .collect();
    (
        one_d(&state.male_m, &state.male_x),
        one_d(&state.female_m, &state.female_y),
        AtomicMeasure::new(2, coords, state.couple_m.clone()).expect("cohort masses are nonnegative"),
    )
}

#[cfg(test)]
mod tests;
