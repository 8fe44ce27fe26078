//! Entropic W₁ by alternating KL projections, run in the log domain with
//! an ε-scaling schedule. Stages that converge slowly switch to
//! over-relaxed projections, whose fixed point is the same plan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::cost_matrix;
use super::{same_dim, AtomicMeasure, GroundNorm, MeasureError, Result};

/// Problems with at least this many cost entries use the parallel sweeps.
const PAR_THRESHOLD: usize = 1 << 14;

/// Residual target for the intermediate ε stages. Only the final stage has
/// to meet `marginal_tol`.
const STAGE_TOL: f64 = 1e-9;

/// Plain iterations observed before the convergence rate is estimated, and
/// the window the estimate is taken over.
const RELAX_WARMUP: usize = 200;
const RELAX_WINDOW: usize = 50;
/// Rates below this converge fast enough without over-relaxation.
const RELAX_MIN_RATE: f64 = 0.9;
const RELAX_MAX: f64 = 1.999;
/// Residual growth, relative to the best seen, treated as divergence.
const RELAX_BLOWUP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    pub epsilon_decay: f64,
    /// L∞ bound on both marginal residuals at the final ε.
    pub marginal_tol: f64,
    /// Iteration cap per ε stage.
    pub max_iters: usize,
    /// Interpret `epsilon_start` and `epsilon_final` as multiples of the
    /// largest ground cost.
    pub scale_by_max_cost: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon_start: 0.1,
            epsilon_final: 1e-4,
            epsilon_decay: 0.5,
            marginal_tol: 1e-8,
            max_iters: 20_000,
            scale_by_max_cost: true,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(MeasureError::InvalidConfig(msg.to_string()));
        if !(self.epsilon_start > 0.0 && self.epsilon_final > 0.0) {
            return bad("epsilon values must be positive");
        }
        if self.epsilon_final > self.epsilon_start {
            return bad("epsilon_final must not exceed epsilon_start");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay < 1.0) {
            return bad("epsilon_decay must lie in (0, 1)");
        }
        if !(self.marginal_tol > 0.0) {
            return bad("marginal_tol must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        Ok(())
    }

    /// Geometric ε sequence for a problem whose largest cost is `max_cost`.
    pub(crate) fn schedule(&self, max_cost: f64) -> Vec<f64> {
        let scale = if self.scale_by_max_cost { max_cost } else { 1.0 };
        let start = self.epsilon_start * scale;
        let end = self.epsilon_final * scale;
        let mut eps = vec![start];
        let mut e = start;
        while e * self.epsilon_decay > end {
            e *= self.epsilon_decay;
            eps.push(e);
        }
        if *eps.last().unwrap() > end {
            eps.push(end);
        }
        eps
    }
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + values.map(|v| (v - hi).exp()).sum::<f64>().ln()
}

/// `out_i = log Σ_j exp(pot_j − c_ij / ε)` over row-major `cost`
/// (`transpose` reads `c_ji` instead).
fn soft_min(cost: &[f64], rows: usize, cols: usize, pot: &[f64], eps: f64, transpose: bool, out: &mut [f64]) {
    let row = |i: usize| -> f64 {
        if transpose {
            log_sum_exp((0..rows).map(|j| pot[j] - cost[j * cols + i] / eps))
        } else {
            log_sum_exp((0..cols).map(|j| pot[j] - cost[i * cols + j] / eps))
        }
    };
    if rows * cols >= PAR_THRESHOLD {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
    } else {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
    }
}

/// Entropic W₁ between probability measures: `Σ c_ij γ_ij` for the
/// Sinkhorn plan at the final ε.
pub fn w1_sinkhorn(p: &AtomicMeasure, q: &AtomicMeasure, cfg: &SinkhornConfig) -> Result<f64> {
    w1_sinkhorn_norm(p, q, GroundNorm::Euclidean, cfg)
}

pub fn w1_sinkhorn_norm(
    p: &AtomicMeasure,
    q: &AtomicMeasure,
    norm: GroundNorm,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    same_dim(p, q)?;
    p.check_probability()?;
    q.check_probability()?;
    cfg.validate()?;
    let p = p.without_zero_atoms();
    let q = q.without_zero_atoms();
    let (n, m) = (p.len(), q.len());
    let cost = cost_matrix(&p, &q, norm);
    let max_cost = cost.iter().copied().fold(0.0, f64::max);
    if max_cost == 0.0 {
        return Ok(0.0);
    }
    let log_a: Vec<f64> = p.weights().iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = q.weights().iter().map(|w| w.ln()).collect();

    // Dual potentials in cost units; scaled by 1/ε inside each stage.
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut fs = vec![0.0; n];
    let mut gs = vec![0.0; m];
    let mut kf = vec![0.0; m];
    let mut kg = vec![0.0; n];

    let schedule = cfg.schedule(max_cost);
    let last = schedule.len() - 1;
    for (stage, &eps) in schedule.iter().enumerate() {
        let tol = if stage == last {
            cfg.marginal_tol
        } else {
            cfg.marginal_tol.max(STAGE_TOL)
        };
        gs.iter_mut().zip(&g).for_each(|(s, v)| *s = v / eps);
        // Over-relaxation factor; 1 is plain Sinkhorn.
        let mut omega = 1.0;
        let mut relax = true;
        let mut mark = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        while iters < cfg.max_iters {
            iters += 1;
            soft_min(&cost, n, m, &gs, eps, false, &mut kg);
            // Marginal residuals of the current plan; `kf` still matches `fs`.
            if iters > 1 {
                let rows = fs
                    .iter()
                    .zip(&kg)
                    .zip(p.weights())
                    .map(|((fi, ki), a)| ((fi + ki).exp() - a).abs());
                let cols = gs
                    .iter()
                    .zip(&kf)
                    .zip(q.weights())
                    .map(|((gj, kj), b)| ((gj + kj).exp() - b).abs());
                residual = rows.chain(cols).fold(0.0, f64::max);
                if residual <= tol {
                    break;
                }
                if omega > 1.0 && !(residual <= RELAX_BLOWUP * best) {
                    omega = 1.0;
                    relax = false;
                }
                best = best.min(residual);
                if relax && omega == 1.0 && iters % RELAX_WINDOW == 0 {
                    if iters >= RELAX_WARMUP {
                        let rate = (residual / mark).powf(1.0 / RELAX_WINDOW as f64);
                        if rate > RELAX_MIN_RATE && rate < 1.0 {
                            omega = (2.0 / (1.0 + (1.0 - rate).sqrt())).min(RELAX_MAX);
                        }
                    }
                    mark = residual;
                }
            }
            fs.iter_mut()
                .zip(&log_a)
                .zip(&kg)
                .for_each(|((s, la), k)| *s = (1.0 - omega) * *s + omega * (la - k));
            soft_min(&cost, n, m, &fs, eps, true, &mut kf);
            gs.iter_mut()
                .zip(&log_b)
                .zip(&kf)
                .for_each(|((s, lb), k)| *s = (1.0 - omega) * *s + omega * (lb - k));
        }
        if stage == last && residual > tol {
            return Err(MeasureError::SinkhornNotConverged {
                iterations: iters,
                residual,
            });
        }
        f.iter_mut().zip(&fs).for_each(|(v, s)| *v = s * eps);
        g.iter_mut().zip(&gs).for_each(|(v, s)| *v = s * eps);
    }

    let eps = schedule[last];
    let total = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let c = cost[i * m + j];
                    c * ((fs[i] + gs[j]) - c / eps).exp()
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total)
}
