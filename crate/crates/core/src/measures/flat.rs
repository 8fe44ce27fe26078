use std::collections::HashMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::sinkhorn::w1_sinkhorn_norm;
use super::{
    canonical_key, same_dim, w1_exact_1d, w1_exact_lp, AtomicMeasure, GroundNorm, MeasureError,
    Result, SinkhornConfig, DEFAULT_LP_CAP,
};

/// Largest union support accepted by [`flat_exact_lp`].
pub const FLAT_LP_SUPPORT_CAP: usize = 200;

/// Transport solver used inside [`rho_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSolver {
    Exact1d,
    ExactLp,
    Sinkhorn(SinkhornConfig),
}

/// `ρ(μ₁, μ₂) = min{M₁, M₂}·W₁(μ₁/M₁, μ₂/M₂) + |M₁ − M₂|`, or the mass
/// gap alone when either measure is zero.
pub fn rho_distance(
    mu1: &AtomicMeasure,
    mu2: &AtomicMeasure,
    solver: RhoSolver,
    norm: GroundNorm,
) -> Result<f64> {
    same_dim(mu1, mu2)?;
    let (m1, m2) = (mu1.total_mass(), mu2.total_mass());
    let gap = (m1 - m2).abs();
    if m1 <= 0.0 || m2 <= 0.0 {
        return Ok(gap);
    }
    let p = mu1.without_zero_atoms().normalize()?;
    let q = mu2.without_zero_atoms().normalize()?;
    let w1 = match solver {
        RhoSolver::Exact1d => w1_exact_1d(&p, &q)?,
        RhoSolver::ExactLp => w1_exact_lp(&p, &q, norm, DEFAULT_LP_CAP)?.0,
        RhoSolver::Sinkhorn(cfg) => w1_sinkhorn_norm(&p, &q, norm, &cfg)?,
    };
    Ok(m1.min(m2) * w1 + gap)
}

/// `C_K = (1/3)·min{1, 2/|K|}` for supports inside a set of diameter `|K|`.
pub fn flat_constant(k_diameter: f64) -> f64 {
    (1.0f64).min(2.0 / k_diameter) / 3.0
}

/// `(C_K·ρ, ρ)`, a bracket around the flat distance.
pub fn flat_sandwich(
    mu1: &AtomicMeasure,
    mu2: &AtomicMeasure,
    k_diameter: f64,
    solver: RhoSolver,
    norm: GroundNorm,
) -> Result<(f64, f64)> {
    if !(k_diameter > 0.0) {
        return Err(MeasureError::InvalidConfig(
            "support diameter must be positive".into(),
        ));
    }
    let rho = rho_distance(mu1, mu2, solver, norm)?;
    Ok((flat_constant(k_diameter) * rho, rho))
}

/// Exact flat distance with the Euclidean norm.
pub fn flat_exact_lp(mu1: &AtomicMeasure, mu2: &AtomicMeasure) -> Result<f64> {
    flat_exact_lp_norm(mu1, mu2, GroundNorm::Euclidean)
}

/// Exact flat distance: maximize `Σ φ(z)(μ₁ − μ₂)({z})` over test values on
/// the union support with `|φ| ≤ 1` and `φ(z) − φ(z') ≤ ‖z − z'‖`.
/// Pairs at distance ≥ 2 are left out since the bounds already imply them.
pub fn flat_exact_lp_norm(
    mu1: &AtomicMeasure,
    mu2: &AtomicMeasure,
    norm: GroundNorm,
) -> Result<f64> {
    same_dim(mu1, mu2)?;
    let dim = mu1.dim();
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut points: Vec<&[f64]> = Vec::new();
    let mut net: Vec<f64> = Vec::new();
    for (mu, sign) in [(mu1, 1.0), (mu2, -1.0)] {
        for (z, w) in mu.atoms() {
            if w == 0.0 {
                continue;
            }
            let k = *index.entry(canonical_key(z)).or_insert_with(|| {
                points.push(z);
                net.push(0.0);
                points.len() - 1
            });
            net[k] += sign * w;
        }
    }
    let n = points.len();
    if n > FLAT_LP_SUPPORT_CAP {
        return Err(MeasureError::SupportTooLarge {
            size: n,
            cap: FLAT_LP_SUPPORT_CAP,
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    debug_assert!(points.iter().all(|p| p.len() == dim));

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let phi: Vec<_> = net.iter().map(|&c| lp.add_var(c, (-1.0, 1.0))).collect();
    for a in 0..n {
        for b in a + 1..n {
            let d = norm.dist(points[a], points[b]);
            if d < 2.0 {
                lp.add_constraint(&[(phi[a], 1.0), (phi[b], -1.0)], ComparisonOp::Le, d);
                lp.add_constraint(&[(phi[b], 1.0), (phi[a], -1.0)], ComparisonOp::Le, d);
            }
        }
    }
    let sol = lp.solve().map_err(|e| MeasureError::Lp(e.to_string()))?;
    Ok(sol.objective().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m1(atoms: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_pairs_1d(atoms).unwrap()
    }

    #[test]
    fn rho_examples() {
        let e = GroundNorm::Euclidean;
        let d = rho_distance(&m1(&[(0.0, 2.0)]), &m1(&[(1.0, 1.0)]), RhoSolver::Exact1d, e).unwrap();
        assert_abs_diff_eq!(d, 2.0);
        let mu = m1(&[(0.0, 0.4), (0.3, 1.1)]);
        assert_abs_diff_eq!(rho_distance(&mu, &mu, RhoSolver::ExactLp, e).unwrap(), 0.0);
        let z = AtomicMeasure::zero(1).unwrap();
        assert_abs_diff_eq!(
            rho_distance(&z, &m1(&[(0.0, 3.0)]), RhoSolver::Exact1d, e).unwrap(),
            3.0
        );
    }

    #[test]
    fn constant_examples() {
        assert_abs_diff_eq!(flat_constant(1.0), 1.0 / 3.0);
        assert_abs_diff_eq!(flat_constant(4.0), 1.0 / 6.0);
        let mu = m1(&[(0.0, 1.0)]);
        let (lo, hi) =
            flat_sandwich(&mu, &mu, 1.0, RhoSolver::Exact1d, GroundNorm::Euclidean).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn flat_lp_examples() {
        let d = flat_exact_lp(&m1(&[(0.0, 2.0)]), &m1(&[(0.0, 0.5)])).unwrap();
        assert_abs_diff_eq!(d, 1.5, epsilon = 1e-12);
        let near = flat_exact_lp(&m1(&[(0.0, 1.0)]), &m1(&[(0.7, 1.0)])).unwrap();
        assert_abs_diff_eq!(near, 0.7, epsilon = 1e-12);
        let far = flat_exact_lp(&m1(&[(0.0, 1.0)]), &m1(&[(3.0, 1.0)])).unwrap();
        assert_abs_diff_eq!(far, 2.0, epsilon = 1e-12);
        let a = AtomicMeasure::from_pairs_2d(&[((0.0, 0.0), 1.0)]).unwrap();
        let b = AtomicMeasure::from_pairs_2d(&[((0.3, 0.4), 1.0)]).unwrap();
        assert_abs_diff_eq!(flat_exact_lp(&a, &b).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn flat_lp_cap() {
        let atoms: Vec<(f64, f64)> = (0..201).map(|k| (k as f64, 1.0)).collect();
        let mu = m1(&atoms);
        let z = AtomicMeasure::zero(1).unwrap();
        assert!(matches!(
            flat_exact_lp(&mu, &z),
            Err(MeasureError::SupportTooLarge { size: 201, .. })
        ));
    }
}
