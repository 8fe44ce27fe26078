//! Finite nonnegative atomic measures on the positive half-line or quadrant,
//! together with the distances used to measure the error of a particle
//! scheme: total variation, the bounded-Lipschitz (flat) distance, and the
//! 1-Wasserstein distance that the flat distance is bracketed by.
//!
//! | Function | Purpose |
//! |----------|---------|
//! | [`w1_exact_1d`] | exact W₁ on the line from sorted atoms |
//! | [`w1_exact_lp`] | exact W₁ via a network-simplex transportation solver |
//! | [`w1_sinkhorn`] | entropic W₁, log-domain with ε-scaling |
//! | [`w1_grid_sinkhorn`] | entropic W₁ for tensor-grid measures under the L¹ cost, linear time per sweep |
//! | [`w1_grid_exact`] | exact W₁ for tensor-grid measures under the L¹ cost, as a min-cost flow on the merged grid |
//! | [`rho_distance`] | min-mass · W₁(normalized) + mass gap |
//! | [`flat_exact_lp`] | flat distance from its test-function LP |
//! | [`tv_distance`] | atom-matching total variation |

mod exact;
mod flat;
mod grid;
mod grid_flow;
pub mod io;
mod network_simplex;
mod sinkhorn;

pub use exact::{w1_exact_1d, w1_exact_lp, TransportPlan, DEFAULT_LP_CAP};
pub use flat::{
    flat_constant, flat_exact_lp, flat_exact_lp_norm, flat_sandwich, rho_distance, RhoSolver,
    FLAT_LP_SUPPORT_CAP,
};
pub use grid::{rho_grid, rho_grid_exact, w1_grid_exact, w1_grid_sinkhorn, GridMeasure2d};
pub use sinkhorn::{w1_sinkhorn, w1_sinkhorn_norm, SinkhornConfig};

use std::collections::HashMap;
use thiserror::Error;

/// Tolerance on total mass for inputs that must be probability measures.
pub const PROBABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("dimension must be 1 or 2, got {0}")]
    InvalidDimension(usize),
    #[error("{points} coordinates do not match {weights} weights in dimension {dim}")]
    LengthMismatch {
        dim: usize,
        points: usize,
        weights: usize,
    },
    #[error("weight {index} is negative or not finite: {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("coordinate of atom {index} is negative or not finite: {value}")]
    InvalidCoordinate { index: usize, value: f64 },
    #[error("measures live in different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("atom counts differ ({0} vs {1}); measures must be paired by index")]
    AtomCountMismatch(usize, usize),
    #[error("measure has zero total mass")]
    ZeroMass,
    #[error("expected a probability measure, total mass is {0}")]
    NotProbability(f64),
    #[error("operation requires dimension {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("exact LP size {size} exceeds the cap {cap}; use the Sinkhorn solver")]
    LpTooLarge { size: usize, cap: usize },
    #[error("union support has {size} atoms, above the flat LP cap of {cap}")]
    SupportTooLarge { size: usize, cap: usize },
    #[error("Sinkhorn did not converge in {iterations} iterations (marginal residual {residual:e})")]
    SinkhornNotConverged { iterations: usize, residual: f64 },
    #[error("invalid Sinkhorn configuration: {0}")]
    InvalidConfig(String),
    #[error("grid measure is malformed: {0}")]
    InvalidGrid(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("transport solver failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// Ground distance between atom locations.
///
/// In two dimensions the flat distance whose test functions have every
/// partial derivative bounded by one is dual to the L¹ distance, so
/// [`GroundNorm::Manhattan`] is the matching choice there; the Euclidean
/// norm is the default for generic use. Both coincide in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundNorm {
    #[default]
    Euclidean,
    Manhattan,
}

impl GroundNorm {
    #[inline]
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            GroundNorm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt(),
            GroundNorm::Manhattan => a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum(),
        }
    }
}

/// Weighted combination of Dirac masses, `Σ w_k δ_{p_k}`, in one or two
/// dimensions. Coordinates are stored flat with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(MeasureError::InvalidDimension(dim));
        }
        if coords.len() != dim * weights.len() {
            return Err(MeasureError::LengthMismatch {
                dim,
                points: coords.len() / dim,
                weights: weights.len(),
            });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(MeasureError::InvalidWeight { index, value });
        }
        if let Some((k, &value)) = coords
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
        {
            return Err(MeasureError::InvalidCoordinate {
                index: k / dim,
                value,
            });
        }
        Ok(Self {
            dim,
            coords,
            weights,
        })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    /// One-dimensional measure from `(location, weight)` pairs.
    pub fn from_pairs_1d(atoms: &[(f64, f64)]) -> Result<Self> {
        let coords = atoms.iter().map(|a| a.0).collect();
        let weights = atoms.iter().map(|a| a.1).collect();
        Self::new(1, coords, weights)
    }

    /// Two-dimensional measure from `((x, y), weight)` pairs.
    pub fn from_pairs_2d(atoms: &[((f64, f64), f64)]) -> Result<Self> {
        let coords = atoms.iter().flat_map(|a| [a.0 .0, a.0 .1]).collect();
        let weights = atoms.iter().map(|a| a.1).collect();
        Self::new(2, coords, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Rescale to unit mass. Zero measures have no normalization; callers
    /// fall back to the mass-gap term alone.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(MeasureError::ZeroMass);
        }
        Ok(Self {
            dim: self.dim,
            coords: self.coords.clone(),
            weights: self.weights.iter().map(|w| w / mass).collect(),
        })
    }

    /// Copy with zero-weight atoms removed; they cannot change any distance.
    pub fn without_zero_atoms(&self) -> Self {
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut weights = Vec::with_capacity(self.weights.len());
        for (p, w) in self.atoms() {
            if w > 0.0 {
                coords.extend_from_slice(p);
                weights.push(w);
            }
        }
        Self {
            dim: self.dim,
            coords,
            weights,
        }
    }

    pub(crate) fn check_probability(&self) -> Result<()> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > PROBABILITY_TOL {
            return Err(MeasureError::NotProbability(mass));
        }
        Ok(())
    }

    /// Smallest axis-aligned extent `max_k max_coord - min_coord` over both
    /// measures, i.e. the side of the smallest cube containing both supports.
    pub fn joint_extent(&self, other: &AtomicMeasure) -> f64 {
        let mut extent: f64 = 0.0;
        for axis in 0..self.dim.max(other.dim) {
            let vals = self
                .coords
                .iter()
                .skip(axis)
                .step_by(self.dim)
                .chain(other.coords.iter().skip(axis).step_by(other.dim));
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            if hi >= lo {
                extent = extent.max(hi - lo);
            }
        }
        extent
    }
}

pub fn total_mass(mu: &AtomicMeasure) -> f64 {
    mu.total_mass()
}

pub fn normalize(mu: &AtomicMeasure) -> Result<AtomicMeasure> {
    mu.normalize()
}

pub(crate) fn same_dim(a: &AtomicMeasure, b: &AtomicMeasure) -> Result<()> {
    if a.dim != b.dim {
        return Err(MeasureError::DimensionMismatch(a.dim, b.dim));
    }
    Ok(())
}

/// `Σ_k (‖p_k − p̃_k‖ m_k + |m_k − m̃_k|)` for measures paired atom by atom.
/// Moving each atom first and then adjusting its mass shows this bounds
/// the flat distance from above.
pub fn dirac_upper_bound(
    mu: &AtomicMeasure,
    other: &AtomicMeasure,
    norm: GroundNorm,
) -> Result<f64> {
    same_dim(mu, other)?;
    if mu.len() != other.len() {
        return Err(MeasureError::AtomCountMismatch(mu.len(), other.len()));
    }
    Ok(mu
        .atoms()
        .zip(other.atoms())
        .map(|((p, m), (q, m2))| norm.dist(p, q) * m + (m - m2).abs())
        .sum())
}

/// Digits kept when canonicalizing coordinates for exact atom matching.
pub const TV_MATCH_DIGITS: i32 = 12;

fn canonical_key(p: &[f64]) -> (i64, i64) {
    let scale = 10f64.powi(TV_MATCH_DIGITS);
    let k = |v: f64| (v * scale).round() as i64;
    (k(p[0]), p.get(1).map_or(0, |&v| k(v)))
}

/// Total variation between atomic measures. Atoms sharing a location (after
/// rounding coordinates to [`TV_MATCH_DIGITS`] decimals) contribute
/// `|w − w̃|`; every unmatched atom contributes its full weight.
pub fn tv_distance(mu: &AtomicMeasure, other: &AtomicMeasure) -> Result<f64> {
    same_dim(mu, other)?;
    let mut net: HashMap<(i64, i64), f64> = HashMap::with_capacity(mu.len() + other.len());
    for (p, w) in mu.atoms() {
        *net.entry(canonical_key(p)).or_insert(0.0) += w;
    }
    for (p, w) in other.atoms() {
        *net.entry(canonical_key(p)).or_insert(0.0) -= w;
    }
    // Sum in key order so the result does not depend on hash iteration order.
    let mut entries: Vec<_> = net.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    Ok(entries.iter().map(|(_, v)| v.abs()).sum())
}
