//! Entropic W₁ with Manhattan ground cost between measures supported on
//! tensor grids.
//!
//! The Gibbs kernel `exp(−(|x−x'| + |y−y'|)/ε)` factorizes over the two
//! axes, and each 1-D factor is applied in linear time by a forward and a
//! backward log-domain recursion over the sorted nodes. One Sinkhorn sweep
//! therefore costs `O(nx·ny)` instead of `O((nx·ny)²)`.

use rayon::prelude::*;

use super::grid_flow;
use super::sinkhorn::log_add_exp;
use super::{AtomicMeasure, MeasureError, Result, SinkhornConfig, PROBABILITY_TOL, TV_MATCH_DIGITS};

const STAGE_TOL: f64 = 1e-5;

/// Nonnegative weights on the nodes of `xs × ys`, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure2d {
    xs: Vec<f64>,
    ys: Vec<f64>,
    weights: Vec<f64>,
}

impl GridMeasure2d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        for axis in [&xs, &ys] {
            if axis.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(MeasureError::InvalidGrid(
                    "grid nodes must be finite and nonnegative".into(),
                ));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(MeasureError::InvalidGrid(
                    "grid nodes must be strictly increasing".into(),
                ));
            }
        }
        if weights.len() != xs.len() * ys.len() {
            return Err(MeasureError::InvalidGrid(format!(
                "{} weights for a {}x{} grid",
                weights.len(),
                xs.len(),
                ys.len()
            )));
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(MeasureError::InvalidWeight { index, value });
        }
        Ok(Self { xs, ys, weights })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.ys.len() + j]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalize(&self) -> Result<Self> {
        let m = self.total_mass();
        if m <= 0.0 {
            return Err(MeasureError::ZeroMass);
        }
        Ok(Self {
            xs: self.xs.clone(),
            ys: self.ys.clone(),
            weights: self.weights.iter().map(|w| w / m).collect(),
        })
    }

    /// Embeds a 2-D atomic measure in the tensor grid spanned by the distinct
    /// coordinates of its nonzero atoms. Coordinates closer than the TV
    /// matching resolution are identified, and atoms sharing a location are
    /// merged.
    pub fn from_atomic(mu: &AtomicMeasure, max_cells: usize) -> Result<Self> {
        if mu.dim() != 2 {
            return Err(MeasureError::WrongDimension { expected: 2, got: mu.dim() });
        }
        let axis = |c: usize| {
            let mut v: Vec<f64> = mu.atoms().filter(|a| a.1 > 0.0).map(|(p, _)| p[c]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|b, a| *b - *a <= snap_tol(*a));
            v
        };
        let (xs, ys) = (axis(0), axis(1));
        let cells = xs.len() * ys.len();
        if cells > max_cells {
            return Err(MeasureError::SupportTooLarge { size: cells, cap: max_cells });
        }
        let mut weights = vec![0.0; cells];
        for (p, w) in mu.atoms().filter(|a| a.1 > 0.0) {
            let i = xs.partition_point(|&x| x < p[0] - snap_tol(x));
            let j = ys.partition_point(|&y| y < p[1] - snap_tol(y));
            weights[i * ys.len() + j] += w;
        }
        Self::new(xs, ys, weights)
    }

    /// The same measure as a list of atoms, zero weights included.
    pub fn to_atomic(&self) -> AtomicMeasure {
        let mut coords = Vec::with_capacity(2 * self.weights.len());
        for &x in &self.xs {
            for &y in &self.ys {
                coords.push(x);
                coords.push(y);
            }
        }
        AtomicMeasure::new(2, coords, self.weights.clone()).expect("grid nodes are valid atoms")
    }
}

#[derive(Clone, Copy)]
enum Kernel {
    /// `exp(−|d|/ε)`
    Gibbs,
    /// `|d|·exp(−|d|/ε)`
    Weighted,
}

/// `out_t = log Σ_k exp(val_k) · K(dst_t − src_k)` for sorted nodes.
fn transform_1d(src: &[f64], val: &[f64], dst: &[f64], eps: f64, kernel: Kernel, out: &mut [f64]) {
    let ninf = f64::NEG_INFINITY;
    if src.is_empty() || dst.is_empty() {
        out.fill(ninf);
        return;
    }
    let hi = src[src.len() - 1].max(dst[dst.len() - 1]);
    match kernel {
        Kernel::Gibbs => {
            let mut acc = ninf;
            let mut last = src[0].min(dst[0]);
            let mut k = 0;
            for (t, &p) in dst.iter().enumerate() {
                while k < src.len() && src[k] <= p {
                    acc = acc - (src[k] - last) / eps;
                    last = src[k];
                    acc = log_add_exp(acc, val[k]);
                    k += 1;
                }
                out[t] = acc - (p - last) / eps;
            }
            acc = ninf;
            last = hi;
            k = src.len();
            for (t, &p) in dst.iter().enumerate().rev() {
                while k > 0 && src[k - 1] > p {
                    acc = acc - (last - src[k - 1]) / eps;
                    last = src[k - 1];
                    acc = log_add_exp(acc, val[k - 1]);
                    k -= 1;
                }
                out[t] = log_add_exp(out[t], acc - (last - p) / eps);
            }
        }
        Kernel::Weighted => {
            // l0 = log Σ e^v e^{−d/ε}, l1 = log Σ e^v d e^{−d/ε}.
            let shift = |l0: f64, l1: f64, d: f64| -> (f64, f64) {
                let l1 = log_add_exp(l1, d.ln() + l0) - d / eps;
                (l0 - d / eps, l1)
            };
            let (mut l0, mut l1) = (ninf, ninf);
            let mut last = src[0].min(dst[0]);
            let mut k = 0;
            for (t, &p) in dst.iter().enumerate() {
                while k < src.len() && src[k] <= p {
                    (l0, l1) = shift(l0, l1, src[k] - last);
                    last = src[k];
                    l0 = log_add_exp(l0, val[k]);
                    k += 1;
                }
                out[t] = shift(l0, l1, p - last).1;
            }
            (l0, l1) = (ninf, ninf);
            last = hi;
            k = src.len();
            for (t, &p) in dst.iter().enumerate().rev() {
                while k > 0 && src[k - 1] > p {
                    (l0, l1) = shift(l0, l1, last - src[k - 1]);
                    last = src[k - 1];
                    l0 = log_add_exp(l0, val[k - 1]);
                    k -= 1;
                }
                out[t] = log_add_exp(out[t], shift(l0, l1, last - p).1);
            }
        }
    }
}

struct Axes<'a> {
    sx: &'a [f64],
    sy: &'a [f64],
    dx: &'a [f64],
    dy: &'a [f64],
}

/// Applies `Kx ⊗ Ky` in the log domain from the source grid to the
/// destination grid.
fn apply(axes: &Axes<'_>, val: &[f64], eps: f64, kx: Kernel, ky: Kernel) -> Vec<f64> {
    let (nsx, nsy, ndx, ndy) = (axes.sx.len(), axes.sy.len(), axes.dx.len(), axes.dy.len());
    // Along y for every source row, stored transposed (ndy × nsx).
    let mut rows = vec![0.0; nsx * ndy];
    rows.par_chunks_mut(ndy)
        .zip(val.par_chunks(nsy))
        .for_each(|(out, v)| transform_1d(axes.sy, v, axes.dy, eps, ky, out));
    let mut cols = vec![0.0; ndy * nsx];
    for i in 0..nsx {
        for j in 0..ndy {
            cols[j * nsx + i] = rows[i * ndy + j];
        }
    }
    // Along x for every destination column.
    let mut out_t = vec![0.0; ndy * ndx];
    out_t
        .par_chunks_mut(ndx)
        .zip(cols.par_chunks(nsx))
        .for_each(|(out, v)| transform_1d(axes.sx, v, axes.dx, eps, kx, out));
    let mut out = vec![0.0; ndx * ndy];
    for j in 0..ndy {
        for i in 0..ndx {
            out[i * ndy + j] = out_t[j * ndx + i];
        }
    }
    out
}

fn snap_tol(v: f64) -> f64 {
    10f64.powi(-TV_MATCH_DIGITS) * v.abs().max(1.0)
}

fn axis_span(a: &[f64], b: &[f64]) -> f64 {
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);
    hi - lo
}

/// Entropic W₁ with cost `|x−x'| + |y−y'|` between two probability
/// measures on (possibly different) tensor grids.
pub fn w1_grid_sinkhorn(p: &GridMeasure2d, q: &GridMeasure2d, cfg: &SinkhornConfig) -> Result<f64> {
    cfg.validate()?;
    for m in [p, q] {
        let mass = m.total_mass();
        if (mass - 1.0).abs() > PROBABILITY_TOL {
            return Err(MeasureError::NotProbability(mass));
        }
    }
    let max_cost = axis_span(&p.xs, &q.xs) + axis_span(&p.ys, &q.ys);
    if max_cost == 0.0 {
        return Ok(0.0);
    }
    let fwd = Axes {
        sx: &q.xs,
        sy: &q.ys,
        dx: &p.xs,
        dy: &p.ys,
    };
    let bwd = Axes {
        sx: &p.xs,
        sy: &p.ys,
        dx: &q.xs,
        dy: &q.ys,
    };
    let log_a: Vec<f64> = p.weights.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = q.weights.iter().map(|w| w.ln()).collect();

    let mut f = vec![0.0; p.weights.len()];
    let mut g = vec![0.0; q.weights.len()];
    let schedule = cfg.schedule(max_cost);
    let last = schedule.len() - 1;
    let mut fs = vec![0.0; f.len()];
    let mut gs = vec![0.0; g.len()];
    for (stage, &eps) in schedule.iter().enumerate() {
        let tol = if stage == last {
            cfg.marginal_tol
        } else {
            cfg.marginal_tol.max(STAGE_TOL)
        };
        gs.iter_mut().zip(&g).for_each(|(s, v)| *s = v / eps);
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        while iters < cfg.max_iters {
            iters += 1;
            let kg = apply(&fwd, &gs, eps, Kernel::Gibbs, Kernel::Gibbs);
            if iters > 1 {
                residual = fs
                    .par_iter()
                    .zip(&kg)
                    .zip(&p.weights)
                    .map(|((fi, ki), a)| {
                        let r = fi + ki;
                        if r == f64::NEG_INFINITY {
                            *a
                        } else {
                            (r.exp() - a).abs()
                        }
                    })
                    .reduce(|| 0.0, f64::max);
                if residual <= tol {
                    break;
                }
            }
            fs.par_iter_mut()
                .zip(&log_a)
                .zip(&kg)
                .for_each(|((s, la), k)| *s = la - k);
            let kf = apply(&bwd, &fs, eps, Kernel::Gibbs, Kernel::Gibbs);
            gs.par_iter_mut()
                .zip(&log_b)
                .zip(&kf)
                .for_each(|((s, lb), k)| *s = lb - k);
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
    let wx = apply(&fwd, &gs, eps, Kernel::Weighted, Kernel::Gibbs);
    let wy = apply(&fwd, &gs, eps, Kernel::Gibbs, Kernel::Weighted);
    let term = |fi: f64, w: f64| {
        let r = fi + w;
        if r == f64::NEG_INFINITY {
            0.0
        } else {
            r.exp()
        }
    };
    Ok(fs
        .par_iter()
        .zip(wx.par_iter().zip(&wy))
        .map(|(&fi, (&x, &y))| term(fi, x) + term(fi, y))
        .sum())
}

/// ρ surrogate for grid measures with the Manhattan ground cost.
pub fn rho_grid(p: &GridMeasure2d, q: &GridMeasure2d, cfg: &SinkhornConfig) -> Result<f64> {
    let (m1, m2) = (p.total_mass(), q.total_mass());
    if m1 <= 0.0 || m2 <= 0.0 {
        return Ok((m1 - m2).abs());
    }
    let w = w1_grid_sinkhorn(&p.normalize()?, &q.normalize()?, cfg)?;
    Ok(m1.min(m2) * w + (m1 - m2).abs())
}

/// Sorted union of two axes, identifying coordinates closer than the
/// snapping tolerance, and the position of every input node in it.
fn merge_axes(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|v, u| *v - *u <= snap_tol(*u));
    let index = |v: &f64| all.partition_point(|&w| w < v - snap_tol(w));
    let ia = a.iter().map(index).collect();
    let ib = b.iter().map(index).collect();
    (all, ia, ib)
}

/// Exact W₁ with cost `|x−x'| + |y−y'|` between two probability measures on
/// (possibly different) tensor grids.
///
/// Every ℓ¹ geodesic between nodes of the merged grid `X × Y` (union of the
/// axes) runs along grid edges, so W₁ equals the min-cost flow on that grid
/// graph with edge costs equal to the node spacing and supplies `p − q`.
/// The graph has `O(|X|·|Y|)` arcs, against `O(|p|·|q|)` for the
/// transportation LP.
pub fn w1_grid_exact(p: &GridMeasure2d, q: &GridMeasure2d) -> Result<f64> {
    for m in [p, q] {
        let mass = m.total_mass();
        if (mass - 1.0).abs() > PROBABILITY_TOL {
            return Err(MeasureError::NotProbability(mass));
        }
    }
    let (xs, pxi, qxi) = merge_axes(&p.xs, &q.xs);
    let (ys, pyi, qyi) = merge_axes(&p.ys, &q.ys);
    let (nx, ny) = (xs.len(), ys.len());
    let mut supply = vec![0.0; nx * ny];
    for (i, &gi) in pxi.iter().enumerate() {
        for (j, &gj) in pyi.iter().enumerate() {
            supply[gi * ny + gj] += p.weight(i, j);
        }
    }
    for (i, &gi) in qxi.iter().enumerate() {
        for (j, &gj) in qyi.iter().enumerate() {
            supply[gi * ny + gj] -= q.weight(i, j);
        }
    }
    grid_flow::solve(&xs, &ys, &supply)
}

/// ρ surrogate for grid measures with the Manhattan ground cost, exact.
pub fn rho_grid_exact(p: &GridMeasure2d, q: &GridMeasure2d) -> Result<f64> {
    let (m1, m2) = (p.total_mass(), q.total_mass());
    if m1 <= 0.0 || m2 <= 0.0 {
        return Ok((m1 - m2).abs());
    }
    let w = w1_grid_exact(&p.normalize()?, &q.normalize()?)?;
    Ok(m1.min(m2) * w + (m1 - m2).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeds_atomic_measures() {
        let mu = AtomicMeasure::from_pairs_2d(&[((0.5, 0.1), 1.0), ((0.2, 0.1), 2.0), ((0.5, 0.1), 0.5), ((0.0, 0.0), 0.0)]).unwrap();
        let g = GridMeasure2d::from_atomic(&mu, 100).unwrap();
        assert_eq!(g.xs(), &[0.2, 0.5]);
        assert_eq!(g.ys(), &[0.1]);
        assert_eq!(g.weights(), &[2.0, 1.5]);
        assert!(GridMeasure2d::from_atomic(&mu, 1).is_err());
    }
    use crate::measures::{w1_exact_lp, GroundNorm, DEFAULT_LP_CAP};
    use approx::assert_abs_diff_eq;

    fn brute_transform(src: &[f64], val: &[f64], dst: &[f64], eps: f64, weighted: bool) -> Vec<f64> {
        dst.iter()
            .map(|&p| {
                src.iter()
                    .zip(val)
                    .map(|(&s, &v)| {
                        let d = (p - s).abs();
                        let w = if weighted { d } else { 1.0 };
                        w * (v - d / eps).exp()
                    })
                    .sum::<f64>()
                    .ln()
            })
            .collect()
    }

    #[test]
    fn linear_transform_matches_quadratic_sum() {
        let src = [0.0, 0.1, 0.25, 0.7, 0.7000001, 1.3];
        let val = [0.3, -1.0, 2.0, 0.0, -0.5, 1.1];
        let dst = [-0.2, 0.1, 0.5, 0.7, 2.0];
        for (kernel, weighted) in [(Kernel::Gibbs, false), (Kernel::Weighted, true)] {
            let mut out = vec![0.0; dst.len()];
            transform_1d(&src, &val, &dst, 0.3, kernel, &mut out);
            let expect = brute_transform(&src, &val, &dst, 0.3, weighted);
            for (o, e) in out.iter().zip(&expect) {
                assert_abs_diff_eq!(o, e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn grid_matches_exact_lp() {
        let p = GridMeasure2d::new(
            vec![0.0, 0.5, 1.0],
            vec![0.1, 0.4],
            vec![0.1, 0.2, 0.0, 0.3, 0.25, 0.15],
        )
        .unwrap();
        let q = GridMeasure2d::new(
            vec![0.2, 0.9],
            vec![0.0, 0.3, 0.6],
            vec![0.3, 0.1, 0.1, 0.05, 0.25, 0.2],
        )
        .unwrap();
        let s = w1_grid_sinkhorn(&p, &q, &SinkhornConfig::default()).unwrap();
        let (e, _) = w1_exact_lp(&p.to_atomic(), &q.to_atomic(), GroundNorm::Manhattan, DEFAULT_LP_CAP).unwrap();
        assert_abs_diff_eq!(s, e, epsilon = 1e-3);
        assert_abs_diff_eq!(w1_grid_exact(&p, &q).unwrap(), e, epsilon = 1e-12);
    }

    #[test]
    fn flow_matches_exact_lp_on_random_grids() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(11);
        let axis = |rng: &mut StdRng| {
            let n = rng.gen_range(1..6);
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        for _ in 0..40 {
            let (px, py, qx, qy) = (axis(&mut rng), axis(&mut rng), axis(&mut rng), axis(&mut rng));
            let pw = (0..px.len() * py.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let qw = (0..qx.len() * qy.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p = GridMeasure2d::new(px, py, pw).unwrap().normalize().unwrap();
            let q = GridMeasure2d::new(qx, qy, qw).unwrap().normalize().unwrap();
            let (e, _) = w1_exact_lp(&p.to_atomic(), &q.to_atomic(), GroundNorm::Manhattan, DEFAULT_LP_CAP).unwrap();
            assert_abs_diff_eq!(w1_grid_exact(&p, &q).unwrap(), e, epsilon = 1e-12);
        }
    }

    #[test]
    fn rigid_shift() {
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.2).collect();
        let ys = xs.clone();
        let w: Vec<f64> = (0..36).map(|k| (1 + k % 5) as f64).collect();
        let p = GridMeasure2d::new(xs.clone(), ys.clone(), w.clone()).unwrap().normalize().unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.05).collect();
        let q = GridMeasure2d::new(shifted, ys, w).unwrap().normalize().unwrap();
        let s = w1_grid_sinkhorn(&p, &q, &SinkhornConfig::default()).unwrap();
        assert_abs_diff_eq!(s, 0.05, epsilon = 1e-3);
        assert_abs_diff_eq!(w1_grid_exact(&p, &q).unwrap(), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridMeasure2d::new(vec![0.0, 0.0], vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(GridMeasure2d::new(vec![0.0], vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(GridMeasure2d::new(vec![0.0], vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn rho_mass_gap() {
        let z = GridMeasure2d::new(vec![0.0], vec![0.0], vec![0.0]).unwrap();
        let p = GridMeasure2d::new(vec![0.0], vec![0.0], vec![3.0]).unwrap();
        assert_abs_diff_eq!(rho_grid(&z, &p, &SinkhornConfig::default()).unwrap(), 3.0);
        assert_abs_diff_eq!(rho_grid_exact(&z, &p).unwrap(), 3.0);
    }
}
