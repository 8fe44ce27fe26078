//! Escalator Boxcar Train particle schemes for a two-sex age-structured
//! population model with marriage, together with the measure-theoretic
//! tooling used to measure their convergence.

pub mod measures;
pub mod model;
pub mod quadrature;
pub mod ebt;
pub mod experiments;
