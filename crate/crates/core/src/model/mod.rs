//! Model coefficients for the two-sex population with couples, the marriage
//! function in its continuous and cohort-discrete forms, and the two shipped
//! example problems.

pub mod config;
mod examples;

use std::fmt;
use std::sync::Arc;

use crate::measures::AtomicMeasure;

pub use config::{parse_key_values, ConfigError, ProblemOverrides};
pub use examples::{example1_problem, example2_problem, problem_by_name, EXAMPLE1_GAMMA};

/// Current population measures, handed to coefficients that depend on the
/// state nonlinearly.
#[derive(Clone, Copy)]
pub struct PopulationView<'a> {
    pub male: &'a AtomicMeasure,
    pub female: &'a AtomicMeasure,
    pub couples: &'a AtomicMeasure,
}

pub type Rate1 = Arc<dyn Fn(f64, f64, Option<&PopulationView<'_>>) -> f64 + Send + Sync>;
pub type Rate2 = Arc<dyn Fn(f64, f64, f64, Option<&PopulationView<'_>>) -> f64 + Send + Sync>;
pub type Fn1 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Death, divorce and birth rates. Every rate takes time first, then age(s),
/// then the current measures when `nonlinear` is set.
#[derive(Clone)]
pub struct CoefficientBundle {
    pub c_m: Rate1,
    pub c_f: Rate1,
    pub c_c: Rate2,
    pub b_m: Rate2,
    pub b_f: Rate2,
    /// `∂_x c^m(t, x)`; a central difference is used when absent.
    pub dc_m_dx: Option<Rate1>,
    pub dc_f_dx: Option<Rate1>,
    /// Whether the rates read the [`PopulationView`] argument at all.
    pub nonlinear: bool,
}

pub(crate) const FD_STEP: f64 = 1e-6;

impl CoefficientBundle {
    pub fn dc_m(&self, t: f64, x: f64, pop: Option<&PopulationView<'_>>) -> f64 {
        match &self.dc_m_dx {
            Some(d) => d(t, x, pop),
            None => central_difference(&self.c_m, t, x, pop),
        }
    }

    pub fn dc_f(&self, t: f64, y: f64, pop: Option<&PopulationView<'_>>) -> f64 {
        match &self.dc_f_dx {
            Some(d) => d(t, y, pop),
            None => central_difference(&self.c_f, t, y, pop),
        }
    }
}

fn central_difference(c: &Rate1, t: f64, x: f64, pop: Option<&PopulationView<'_>>) -> f64 {
    (c(t, x + FD_STEP, pop) - c(t, x - FD_STEP, pop)) / (2.0 * FD_STEP)
}

impl fmt::Debug for CoefficientBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientBundle")
            .field("nonlinear", &self.nonlinear)
            .field("analytic_dc_m", &self.dc_m_dx.is_some())
            .field("analytic_dc_f", &self.dc_f_dx.is_some())
            .finish_non_exhaustive()
    }
}

/// Ingredients of the marriage function: the pairing rate `Θ(t, x, y)`,
/// the market weights `h(t, x)` and `g(t, y)`, the regularizer `γ` and the
/// minimal marriage age `a0`.
#[derive(Clone)]
pub struct MarriageKernel {
    pub theta: Fn2,
    pub h: Fn1,
    pub g: Fn1,
    pub gamma: f64,
    pub a0: f64,
}

impl MarriageKernel {
    /// `h` with the cutoff below `a0` enforced.
    #[inline]
    pub fn h_at(&self, t: f64, x: f64) -> f64 {
        if x < self.a0 {
            0.0
        } else {
            (self.h)(t, x)
        }
    }

    #[inline]
    pub fn g_at(&self, t: f64, y: f64) -> f64 {
        if y < self.a0 {
            0.0
        } else {
            (self.g)(t, y)
        }
    }

    /// `Θ(t,x,y)·h(t,x)·g(t,y)`, zero when either age is below `a0`.
    #[inline]
    pub fn pair_rate(&self, t: f64, x: f64, y: f64) -> f64 {
        if x < self.a0 || y < self.a0 {
            return 0.0;
        }
        let hg = (self.h)(t, x) * (self.g)(t, y);
        if hg == 0.0 {
            0.0
        } else {
            (self.theta)(t, x, y) * hg
        }
    }
}

impl fmt::Debug for MarriageKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarriageKernel")
            .field("gamma", &self.gamma)
            .field("a0", &self.a0)
            .finish_non_exhaustive()
    }
}

/// Closed-form densities `u^m(t,x)`, `u^f(t,y)`, `u^c(t,x,y)`.
#[derive(Clone)]
pub struct ExactSolution {
    pub u_m: Fn1,
    pub u_f: Fn1,
    pub u_c: Fn2,
    /// Times for which the formulas are valid.
    pub valid_t: (f64, f64),
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactSolution")
            .field("valid_t", &self.valid_t)
            .finish_non_exhaustive()
    }
}

/// Initial densities.
#[derive(Clone)]
pub struct InitialData {
    pub u_m: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub u_f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub u_c: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

/// A complete problem: coefficients, kernel, initial data on
/// `[age_min, age_max)` (squared for couples) and the horizon.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub bundle: CoefficientBundle,
    pub kernel: MarriageKernel,
    pub initial: InitialData,
    pub t_end: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("InitialData { .. }")
    }
}

/// Cohort masses, locations and the dense couple grid (row = male cohort,
/// column = female cohort) seen by the marriage function.
#[derive(Clone, Copy, Debug)]
pub struct CohortView<'a> {
    pub male_m: &'a [f64],
    pub male_x: &'a [f64],
    pub female_m: &'a [f64],
    pub female_y: &'a [f64],
    pub couple_m: &'a [f64],
    pub couple_x: &'a [f64],
    pub couple_y: &'a [f64],
}

impl CohortView<'_> {
    #[inline]
    fn cols(&self) -> usize {
        self.female_m.len()
    }
}

/// Unclamped singles `m_i^m − Σ_w m_iw^c` and `m_j^f − Σ_v m_vj^c`.
pub fn singles_masses(male_m: &[f64], female_m: &[f64], couple_m: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = female_m.len();
    let mut s_m = male_m.to_vec();
    let mut s_f = female_m.to_vec();
    if cols == 0 {
        return (s_m, s_f);
    }
    for (row, s) in couple_m.chunks_exact(cols).zip(s_m.iter_mut()) {
        for (c, sf) in row.iter().zip(s_f.iter_mut()) {
            *sf -= c;
        }
        *s -= row.iter().sum::<f64>();
    }
    (s_m, s_f)
}

/// Cohort-discrete marriage function of the simplified scheme. The clamped
/// singles and the shared denominator are computed once per state; couple
/// cohort `(i, j)` sits at `(x_i^m, y_j^f)`.
#[derive(Debug, Clone)]
pub struct SimplifiedMarriage {
    pub singles_m: Vec<f64>,
    pub singles_f: Vec<f64>,
    pub denominator: f64,
}

impl SimplifiedMarriage {
    pub fn new(kernel: &MarriageKernel, t: f64, view: &CohortView<'_>) -> Self {
        let (mut s_m, mut s_f) = singles_masses(view.male_m, view.female_m, view.couple_m);
        s_m.iter_mut().for_each(|s| *s = s.max(0.0));
        s_f.iter_mut().for_each(|s| *s = s.max(0.0));
        let hm: f64 = s_m
            .iter()
            .zip(view.male_x)
            .map(|(s, &x)| kernel.h_at(t, x) * s)
            .sum();
        let gf: f64 = s_f
            .iter()
            .zip(view.female_y)
            .map(|(s, &y)| kernel.g_at(t, y) * s)
            .sum();
        Self {
            singles_m: s_m,
            singles_f: s_f,
            denominator: kernel.gamma + hm + gf,
        }
    }

    /// `N_ij / D_ij` for a couple cohort located at `(x, y)`.
    #[inline]
    pub fn quotient(&self, kernel: &MarriageKernel, t: f64, i: usize, j: usize, x: f64, y: f64) -> f64 {
        let s = self.singles_m[i] * self.singles_f[j];
        if s == 0.0 {
            return 0.0;
        }
        kernel.pair_rate(t, x, y) * s / self.denominator
    }
}

/// `N_ij/D_ij` of the simplified scheme for one couple cohort.
pub fn marriage_quotient(
    kernel: &MarriageKernel,
    t: f64,
    view: &CohortView<'_>,
    i: usize,
    j: usize,
) -> f64 {
    let k = i * view.cols() + j;
    SimplifiedMarriage::new(kernel, t, view).quotient(kernel, t, i, j, view.couple_x[k], view.couple_y[k])
}

/// The four-sum numerator `N_ij`, its first-moment version `N̄_ij` and the
/// denominator `D_ij` of the original scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginalTerms {
    pub n: f64,
    pub nbar: (f64, f64),
    pub d: f64,
}

/// `D = γ + Σ h(x_i)m_i − Σ h(x_ij)m_ij + Σ g(y_j)m_j − Σ g(y_ij)m_ij`,
/// shared by every couple cohort.
pub fn original_denominator(kernel: &MarriageKernel, t: f64, view: &CohortView<'_>) -> f64 {
    let mut d = kernel.gamma;
    for (&m, &x) in view.male_m.iter().zip(view.male_x) {
        d += kernel.h_at(t, x) * m;
    }
    for (&m, &y) in view.female_m.iter().zip(view.female_y) {
        d += kernel.g_at(t, y) * m;
    }
    for ((&m, &x), &y) in view.couple_m.iter().zip(view.couple_x).zip(view.couple_y) {
        if m != 0.0 {
            d -= (kernel.h_at(t, x) + kernel.g_at(t, y)) * m;
        }
    }
    d
}

/// Per-state weights reused by every `(i, j)` of the original scheme: the
/// nonzero `a_iw = h(x_iw)m_iw` per row (with `x_iw`) and `b_vj = g(y_vj)m_vj`
/// per column (with `y_vj`).
pub(crate) struct OriginalWeights {
    pub d: f64,
    rows: Vec<Vec<(f64, f64)>>,
    cols: Vec<Vec<(f64, f64)>>,
}

impl OriginalWeights {
    pub fn new(kernel: &MarriageKernel, t: f64, view: &CohortView<'_>) -> Self {
        let cols = view.cols();
        let n_rows = view.male_m.len();
        let mut row_nz = vec![Vec::new(); n_rows];
        let mut col_nz = vec![Vec::new(); cols];
        for (k, &m) in view.couple_m.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let (x, y) = (view.couple_x[k], view.couple_y[k]);
            let (a, b) = (kernel.h_at(t, x) * m, kernel.g_at(t, y) * m);
            if a != 0.0 {
                row_nz[k / cols].push((x, a));
            }
            if b != 0.0 {
                col_nz[k % cols].push((y, b));
            }
        }
        Self {
            d: original_denominator(kernel, t, view),
            rows: row_nz,
            cols: col_nz,
        }
    }

    /// `(N_ij, N̄_ij)` from the four sums.
    pub fn numerators(
        &self,
        kernel: &MarriageKernel,
        t: f64,
        view: &CohortView<'_>,
        i: usize,
        j: usize,
    ) -> (f64, (f64, f64)) {
        let (xi, yj) = (view.male_x[i], view.female_y[j]);
        let hm = kernel.h_at(t, xi) * view.male_m[i];
        let gf = kernel.g_at(t, yj) * view.female_m[j];
        let theta = |x: f64, y: f64| (kernel.theta)(t, x, y);
        let (row, col) = (&self.rows[i], &self.cols[j]);

        let mut n = 0.0;
        let (mut nx, mut ny) = (0.0, 0.0);
        if hm != 0.0 {
            if gf != 0.0 {
                let v = theta(xi, yj) * hm * gf;
                n += v;
                nx += xi * v;
                ny += yj * v;
            }
            for &(y, bv) in col {
                let term = theta(xi, y) * hm * bv;
                n -= term;
                nx -= xi * term;
                ny -= y * term;
            }
        }
        for &(x, aw) in row {
            if gf != 0.0 {
                let term = theta(x, yj) * gf * aw;
                n -= term;
                nx -= x * term;
                ny -= yj * term;
            }
            for &(y, bv) in col {
                let term = theta(x, y) * aw * bv;
                n += term;
                nx += x * term;
                ny += y * term;
            }
        }
        (n, (nx, ny))
    }
}

/// `N_ij`, `N̄_ij` and `D_ij` of the original scheme for one couple cohort.
pub fn marriage_terms_original(
    kernel: &MarriageKernel,
    t: f64,
    view: &CohortView<'_>,
    i: usize,
    j: usize,
) -> OriginalTerms {
    let w = OriginalWeights::new(kernel, t, view);
    let (n, nbar) = w.numerators(kernel, t, view, i, j);
    OriginalTerms { n, nbar, d: w.d }
}

/// The marriage function applied to atomic singles measures: one atom per
/// pair `(x_i, y_j)` with weight `Θhg·s_i s_j / (γ + Σ h s^m + Σ g s^f)`.
pub fn continuous_marriage_density(
    t: f64,
    singles_m: &AtomicMeasure,
    singles_f: &AtomicMeasure,
    kernel: &MarriageKernel,
) -> AtomicMeasure {
    let denom = kernel.gamma
        + singles_m
            .atoms()
            .map(|(x, s)| kernel.h_at(t, x[0]) * s)
            .sum::<f64>()
        + singles_f
            .atoms()
            .map(|(y, s)| kernel.g_at(t, y[0]) * s)
            .sum::<f64>();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (x, sm) in singles_m.atoms() {
        for (y, sf) in singles_f.atoms() {
            let w = kernel.pair_rate(t, x[0], y[0]) * sm * sf / denom;
            if w > 0.0 {
                coords.extend_from_slice(&[x[0], y[0]]);
                weights.push(w);
            }
        }
    }
    AtomicMeasure::new(2, coords, weights).expect("pair atoms inherit valid coordinates")
}
