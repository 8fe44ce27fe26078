//! Right-hand sides of both schemes over a flat state vector.
//!
//! Internal locations move with unit speed, so within a macro step they are
//! `x(t_n) + τ` and never enter the integrated vector. The right-hand sides
//! take the offset `τ = s − t_n` rather than the absolute time so that a
//! cohort born at `t_n` sits at exactly `τ`. What is integrated:
//!
//! - simplified: `[m^m (n) | m^f (n) | m^c (n²)]`
//! - original: `[m^m (n) | m^f (n) | Π^m | Π^f | m^c (n²) | x̃ (n²) | ỹ (n²)]`

use rayon::prelude::*;

use super::{CohortState, Variant};
use crate::measures::AtomicMeasure;
use crate::model::{CohortView, OriginalWeights, PopulationView, Problem};

/// Layout of the integrated vector plus the locations at `t_n`.
#[derive(Debug, Clone)]
pub struct Packed {
    n: usize,
    variant: Variant,
    t0: f64,
    male_x0: Vec<f64>,
    female_y0: Vec<f64>,
}

impl Packed {
    pub fn new(state: &CohortState) -> Self {
        Self {
            n: state.len(),
            variant: state.variant,
            t0: state.t,
            male_x0: state.male_x.clone(),
            female_y0: state.female_y.clone(),
        }
    }

    fn couples_at(&self) -> usize {
        match self.variant {
            Variant::Simplified => 2 * self.n,
            Variant::Original => 2 * self.n + 2,
        }
    }

    pub fn len(&self) -> usize {
        let cells = self.n * self.n;
        match self.variant {
            Variant::Simplified => 2 * self.n + cells,
            Variant::Original => 2 * self.n + 2 + 3 * cells,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pack(&self, state: &CohortState) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.len());
        y.extend_from_slice(&state.male_m);
        y.extend_from_slice(&state.female_m);
        if self.variant == Variant::Original {
            y.push(state.pi_m);
            y.push(state.pi_f);
        }
        y.extend_from_slice(&state.couple_m);
        if self.variant == Variant::Original {
            y.extend_from_slice(&state.couple_xt);
            y.extend_from_slice(&state.couple_yt);
        }
        y
    }

    /// Positions of all masses in the vector.
    pub fn mass_indices(&self) -> impl Iterator<Item = usize> {
        let c = self.couples_at();
        (0..2 * self.n).chain(c..c + self.n * self.n)
    }

    /// Zeroes the moments attached to a mass that was clamped to zero.
    pub fn clear_moments(&self, k: usize, y: &mut [f64]) {
        if self.variant != Variant::Original {
            return;
        }
        let (n, c) = (self.n, self.couples_at());
        let cells = n * n;
        if k == 0 {
            y[2 * n] = 0.0;
        } else if k == n {
            y[2 * n + 1] = 0.0;
        } else if k >= c {
            y[k + cells] = 0.0;
            y[k + 2 * cells] = 0.0;
        }
    }

    /// State at `t_n + elapsed` from an integrated vector.
    pub fn unpack(&self, base: &CohortState, y: &[f64], elapsed: f64) -> CohortState {
        let (n, c) = (self.n, self.couples_at());
        let cells = n * n;
        let mut s = base.clone();
        s.male_m.copy_from_slice(&y[..n]);
        s.female_m.copy_from_slice(&y[n..2 * n]);
        s.couple_m.copy_from_slice(&y[c..c + cells]);
        s.male_x.iter_mut().for_each(|x| *x += elapsed);
        s.female_y.iter_mut().for_each(|x| *x += elapsed);
        match self.variant {
            Variant::Simplified => {
                s.couple_x.iter_mut().for_each(|x| *x += elapsed);
                s.couple_y.iter_mut().for_each(|x| *x += elapsed);
            }
            Variant::Original => {
                s.pi_m = y[2 * n];
                s.pi_f = y[2 * n + 1];
                s.couple_xt.copy_from_slice(&y[c + cells..c + 2 * cells]);
                s.couple_yt.copy_from_slice(&y[c + 2 * cells..]);
                s.sync_original_locations();
            }
        }
        s
    }

    fn locations(&self, tau: f64) -> (Vec<f64>, Vec<f64>) {
        (
            self.male_x0.iter().map(|x| x + tau).collect(),
            self.female_y0.iter().map(|y| y + tau).collect(),
        )
    }
}

/// Measures handed to nonlinear coefficients.
struct Population {
    male: AtomicMeasure,
    female: AtomicMeasure,
    couples: AtomicMeasure,
}

impl Population {
    fn build(view: &CohortView<'_>) -> Self {
        let clamp = |v: &[f64]| v.iter().map(|m| m.max(0.0)).collect::<Vec<_>>();
        let coords = view
            .couple_x
            .iter()
            .zip(view.couple_y)
            .flat_map(|(&x, &y)| [x.max(0.0), y.max(0.0)])
            .collect();
        let one_d = |m: &[f64], x: &[f64]| {
            AtomicMeasure::new(1, x.iter().map(|v| v.max(0.0)).collect(), clamp(m))
                .expect("clamped cohorts are valid atoms")
        };
        Self {
            male: one_d(view.male_m, view.male_x),
            female: one_d(view.female_m, view.female_y),
            couples: AtomicMeasure::new(2, coords, clamp(view.couple_m))
                .expect("clamped cohorts are valid atoms"),
        }
    }

    fn view(&self) -> PopulationView<'_> {
        PopulationView {
            male: &self.male,
            female: &self.female,
            couples: &self.couples,
        }
    }
}

/// Simplified scheme: unit-speed transport of every cohort, births into the
/// boundary cohorts, and couple influx from clamped singles.
pub fn rhs_simplified(packed: &Packed, problem: &Problem, tau: f64, y: &[f64], dy: &mut [f64]) {
    let n = packed.n;
    let s = packed.t0 + tau;
    let (bundle, kernel) = (&problem.bundle, &problem.kernel);
    let (xm, yf) = packed.locations(tau);
    let (mm, rest) = y.split_at(n);
    let (mf, mc) = rest.split_at(n);

    // Couple locations coincide with (x_i^m, y_j^f) in this scheme.
    let mut s_m = mm.to_vec();
    let mut s_f = mf.to_vec();
    for (i, row) in mc.chunks_exact(n).enumerate() {
        for (j, &c) in row.iter().enumerate() {
            s_m[i] -= c;
            s_f[j] -= c;
        }
    }
    let pm: Vec<f64> = (0..n).map(|i| kernel.h_at(s, xm[i]) * s_m[i].max(0.0)).collect();
    let pf: Vec<f64> = (0..n).map(|j| kernel.g_at(s, yf[j]) * s_f[j].max(0.0)).collect();
    let denom = kernel.gamma + pm.iter().sum::<f64>() + pf.iter().sum::<f64>();

    let pop_store;
    let pop = if bundle.nonlinear {
        let (cx, cy) = tensor_locations(&xm, &yf);
        pop_store = Population::build(&CohortView {
            male_m: mm,
            male_x: &xm,
            female_m: mf,
            female_y: &yf,
            couple_m: mc,
            couple_x: &cx,
            couple_y: &cy,
        });
        Some(pop_store.view())
    } else {
        None
    };
    let pop = pop.as_ref();

    let (dmm, rest) = dy.split_at_mut(n);
    let (dmf, dmc) = rest.split_at_mut(n);
    for k in 0..n {
        dmm[k] = -(bundle.c_m)(s, xm[k], pop) * mm[k];
        dmf[k] = -(bundle.c_f)(s, yf[k], pop) * mf[k];
    }
    let births: Vec<(f64, f64)> = dmc
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, drow)| {
            let x = xm[i];
            let row = &mc[i * n..(i + 1) * n];
            let (mut bm, mut bf) = (0.0, 0.0);
            for j in 0..n {
                let c = row[j];
                let y = yf[j];
                let mut d = 0.0;
                if c != 0.0 {
                    d -= (bundle.c_c)(s, x, y, pop) * c;
                    bm += (bundle.b_m)(s, x, y, pop) * c;
                    bf += (bundle.b_f)(s, x, y, pop) * c;
                }
                if pm[i] != 0.0 && pf[j] != 0.0 {
                    d += (kernel.theta)(s, x, y) * pm[i] * pf[j] / denom;
                }
                drow[j] = d;
            }
            (bm, bf)
        })
        .collect();
    for (bm, bf) in births {
        dmm[0] += bm;
        dmf[0] += bf;
    }
}

fn tensor_locations(xm: &[f64], yf: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = xm.len();
    let mut cx = Vec::with_capacity(n * n);
    let mut cy = Vec::with_capacity(n * n);
    for &x in xm {
        for &y in yf {
            cx.push(x);
            cy.push(y);
        }
    }
    (cx, cy)
}

/// Original scheme: boundary cohorts carry their first moment `Π`, couples
/// carry first moments `(x̃, ỹ)`, and the marriage influx uses the four-sum
/// numerators with the unclamped shared denominator.
pub fn rhs_original(packed: &Packed, problem: &Problem, tau: f64, y: &[f64], dy: &mut [f64]) {
    let n = packed.n;
    let s = packed.t0 + tau;
    let cells = n * n;
    let (bundle, kernel) = (&problem.bundle, &problem.kernel);
    let (mut xm, mut yf) = packed.locations(tau);
    let (mm, rest) = y.split_at(n);
    let (mf, rest) = rest.split_at(n);
    let (pi, rest) = rest.split_at(2);
    let (mc, rest) = rest.split_at(cells);
    let (xt, yt) = rest.split_at(cells);
    xm[0] = CohortState::boundary_location(pi[0], mm[0]);
    yf[0] = CohortState::boundary_location(pi[1], mf[0]);
    let mut cx = vec![0.0; cells];
    let mut cy = vec![0.0; cells];
    for k in 0..cells {
        if mc[k] != 0.0 {
            cx[k] = xt[k] / mc[k];
            cy[k] = yt[k] / mc[k];
        }
    }
    let view = CohortView {
        male_m: mm,
        male_x: &xm,
        female_m: mf,
        female_y: &yf,
        couple_m: mc,
        couple_x: &cx,
        couple_y: &cy,
    };
    let weights = OriginalWeights::new(kernel, s, &view);
    let pop_store;
    let pop = if bundle.nonlinear {
        pop_store = Population::build(&view);
        Some(pop_store.view())
    } else {
        None
    };
    let pop = pop.as_ref();

    let (dmm, rest) = dy.split_at_mut(n);
    let (dmf, rest) = rest.split_at_mut(n);
    let (dpi, rest) = rest.split_at_mut(2);
    let (dmc, rest) = rest.split_at_mut(cells);
    let (dxt, dyt) = rest.split_at_mut(cells);
    for k in 1..n {
        dmm[k] = -(bundle.c_m)(s, xm[k], pop) * mm[k];
        dmf[k] = -(bundle.c_f)(s, yf[k], pop) * mf[k];
    }
    let (cm0, cf0) = ((bundle.c_m)(s, 0.0, pop), (bundle.c_f)(s, 0.0, pop));
    dmm[0] = -cm0 * mm[0] - bundle.dc_m(s, 0.0, pop) * pi[0];
    dmf[0] = -cf0 * mf[0] - bundle.dc_f(s, 0.0, pop) * pi[1];
    dpi[0] = mm[0] - cm0 * pi[0];
    dpi[1] = mf[0] - cf0 * pi[1];

    let d = weights.d;
    let births: Vec<(f64, f64)> = dmc
        .par_chunks_mut(n)
        .zip(dxt.par_chunks_mut(n))
        .zip(dyt.par_chunks_mut(n))
        .enumerate()
        .map(|(i, ((drow, dxrow), dyrow))| {
            let (mut bm, mut bf) = (0.0, 0.0);
            for j in 0..n {
                let k = i * n + j;
                let (c, x, y) = (mc[k], cx[k], cy[k]);
                let (num, (nx, ny)) = weights.numerators(kernel, s, &view, i, j);
                let cc = if c != 0.0 {
                    bm += (bundle.b_m)(s, x, y, pop) * c;
                    bf += (bundle.b_f)(s, x, y, pop) * c;
                    (bundle.c_c)(s, x, y, pop)
                } else {
                    0.0
                };
                drow[j] = -cc * c + num / d;
                dxrow[j] = (1.0 - x * cc) * c + nx / d;
                dyrow[j] = (1.0 - y * cc) * c + ny / d;
            }
            (bm, bf)
        })
        .collect();
    for (bm, bf) in births {
        dmm[0] += bm;
        dmf[0] += bf;
    }
}
