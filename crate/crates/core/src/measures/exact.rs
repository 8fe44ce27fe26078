use super::{network_simplex, same_dim, AtomicMeasure, GroundNorm, MeasureError, Result};

/// Default cap on `rows × cols` for the exact transportation LP.
pub const DEFAULT_LP_CAP: usize = 1_000_000;

/// Coupling between two atomic measures, dense row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// `γ_ij` at index `i * cols + j`.
    pub gamma: Vec<f64>,
    /// Ground cost `c_ij` at the same index.
    pub cost: Vec<f64>,
}

impl TransportPlan {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma
            .chunks_exact(self.cols.max(1))
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.gamma.chunks_exact(self.cols.max(1)) {
            for (o, g) in out.iter_mut().zip(row) {
                *o += g;
            }
        }
        out
    }

    pub fn total_cost(&self) -> f64 {
        self.gamma.iter().zip(&self.cost).map(|(g, c)| g * c).sum()
    }
}

pub(crate) fn cost_matrix(p: &AtomicMeasure, q: &AtomicMeasure, norm: GroundNorm) -> Vec<f64> {
    let mut cost = Vec::with_capacity(p.len() * q.len());
    for (x, _) in p.atoms() {
        for (y, _) in q.atoms() {
            cost.push(norm.dist(x, y));
        }
    }
    cost
}

/// Exact W₁ between probability measures on the line, `∫ |F_p − F_q| dx`,
/// from the piecewise-constant CDF difference over the merged sorted atoms.
pub fn w1_exact_1d(p: &AtomicMeasure, q: &AtomicMeasure) -> Result<f64> {
    for m in [p, q] {
        if m.dim() != 1 {
            return Err(MeasureError::WrongDimension {
                expected: 1,
                got: m.dim(),
            });
        }
        m.check_probability()?;
    }
    let mut events: Vec<(f64, f64)> = p
        .atoms()
        .map(|(x, w)| (x[0], w))
        .chain(q.atoms().map(|(x, w)| (x[0], -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut total = 0.0;
    let mut cdf_gap = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        total += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    Ok(total)
}

/// Exact W₁ between probability measures by solving the transportation
/// LP with ground cost `norm`. `cap` bounds `rows × cols`.
pub fn w1_exact_lp(
    p: &AtomicMeasure,
    q: &AtomicMeasure,
    norm: GroundNorm,
    cap: usize,
) -> Result<(f64, TransportPlan)> {
    same_dim(p, q)?;
    p.check_probability()?;
    q.check_probability()?;
    let size = p.len() * q.len();
    if size > cap {
        return Err(MeasureError::LpTooLarge { size, cap });
    }
    let cost = cost_matrix(p, q, norm);
    let sol = network_simplex::solve(p.weights(), q.weights(), &cost, 50 * (size + 16))?;
    let plan = TransportPlan {
        rows: p.len(),
        cols: q.len(),
        gamma: sol.plan,
        cost,
    };
    Ok((sol.cost, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m1(atoms: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_pairs_1d(atoms).unwrap()
    }

    #[test]
    fn exact_1d_examples() {
        assert_abs_diff_eq!(
            w1_exact_1d(&m1(&[(0.0, 1.0)]), &m1(&[(1.0, 1.0)])).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            w1_exact_1d(&m1(&[(0.0, 0.5), (1.0, 0.5)]), &m1(&[(0.5, 0.5), (1.5, 0.5)])).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            w1_exact_1d(&m1(&[(0.0, 0.5), (2.0, 0.5)]), &m1(&[(1.0, 1.0)])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn exact_1d_rejects_non_probability() {
        let err = w1_exact_1d(&m1(&[(0.0, 2.0)]), &m1(&[(1.0, 1.0)])).unwrap_err();
        assert!(matches!(err, MeasureError::NotProbability(m) if m == 2.0));
    }

    #[test]
    fn exact_lp_examples() {
        let mu = m1(&[(0.0, 0.25), (0.4, 0.75)]);
        let (d, plan) = w1_exact_lp(&mu, &mu, GroundNorm::Euclidean, DEFAULT_LP_CAP).unwrap();
        assert_abs_diff_eq!(d, 0.0);
        assert_abs_diff_eq!(plan.entry(0, 0), 0.25);
        assert_abs_diff_eq!(plan.entry(1, 1), 0.75);
        assert_eq!(plan.entry(0, 1), 0.0);

        let a = AtomicMeasure::from_pairs_2d(&[((0.0, 0.0), 1.0)]).unwrap();
        let b = AtomicMeasure::from_pairs_2d(&[((1.0, 1.0), 1.0)]).unwrap();
        let (d, _) = w1_exact_lp(&a, &b, GroundNorm::Euclidean, DEFAULT_LP_CAP).unwrap();
        assert_abs_diff_eq!(d, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn exact_lp_cap() {
        let mu = m1(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(
            w1_exact_lp(&mu, &mu, GroundNorm::Euclidean, 3),
            Err(MeasureError::LpTooLarge { size: 4, cap: 3 })
        );
    }

    #[test]
    fn plan_marginals_hold() {
        let p = m1(&[(0.0, 0.1), (0.3, 0.2), (0.9, 0.3), (1.4, 0.4)]);
        let q = m1(&[(0.2, 0.4), (0.5, 0.35), (2.0, 0.25)]);
        let (d, plan) = w1_exact_lp(&p, &q, GroundNorm::Euclidean, DEFAULT_LP_CAP).unwrap();
        for (r, w) in plan.row_sums().iter().zip(p.weights()) {
            assert_abs_diff_eq!(r, w, epsilon = 1e-12);
        }
        for (c, w) in plan.col_sums().iter().zip(q.weights()) {
            assert_abs_diff_eq!(c, w, epsilon = 1e-12);
        }
        assert!(plan.gamma.iter().all(|&g| g >= 0.0));
        assert_abs_diff_eq!(d, w1_exact_1d(&p, &q).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(d, plan.total_cost(), epsilon = 1e-14);
    }
}
