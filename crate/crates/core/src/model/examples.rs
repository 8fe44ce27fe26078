//! The two example problems used by the convergence studies.

use std::sync::Arc;

use super::{
    CoefficientBundle, ExactSolution, InitialData, MarriageKernel, Problem, Rate1, Rate2,
};

/// Regularizer used for Example 1 unless overridden.
pub const EXAMPLE1_GAMMA: f64 = 1.0;
/// Minimal marriage age of both examples.
const A0: f64 = 0.1;

fn constant1(v: f64) -> Rate1 {
    Arc::new(move |_, _, _| v)
}

fn constant2(v: f64) -> Rate2 {
    Arc::new(move |_, _, _, _| v)
}

/// `(1/10 − x)(x − 1)` on `[1/10, 1]`, zero elsewhere.
fn bump1(x: f64) -> f64 {
    if (A0..=1.0).contains(&x) {
        (A0 - x) * (x - 1.0)
    } else {
        0.0
    }
}

/// Constant rates, time-independent kernel and unit initial densities on
/// `[0, 1)`; no exact solution is known.
pub fn example1_problem(gamma: f64) -> Problem {
    let bundle = CoefficientBundle {
        c_m: constant1(0.1),
        c_f: constant1(0.1),
        c_c: constant2(0.1),
        b_m: constant2(10.0),
        b_f: constant2(10.0),
        dc_m_dx: Some(constant1(0.0)),
        dc_f_dx: Some(constant1(0.0)),
        nonlinear: false,
    };
    let kernel = MarriageKernel {
        theta: Arc::new(|_, x, y| 10.0 * bump1(x) * bump1(y)),
        h: Arc::new(|_, x| bump1(x)),
        g: Arc::new(|_, y| bump1(y)),
        gamma,
        a0: A0,
    };
    let unit = |x: f64| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 };
    let initial = InitialData {
        u_m: Arc::new(unit),
        u_f: Arc::new(unit),
        u_c: Arc::new(move |x, y| unit(x) * unit(y)),
    };
    Problem {
        name: "example1".into(),
        bundle,
        kernel,
        initial,
        t_end: 1.0,
        age_min: 0.0,
        age_max: 1.0,
        exact: None,
    }
}

fn ex2_single(t: f64, x: f64) -> f64 {
    if (0.0..=t + 1.0).contains(&x) {
        (1.0 - t / 10.0) * (t - x - 1.0) * (-t + x - 1.0)
    } else {
        0.0
    }
}

fn in_marriage_band(t: f64, x: f64) -> bool {
    (A0..=t + 1.0).contains(&x)
}

fn ex2_couples(t: f64, x: f64, y: f64) -> f64 {
    if in_marriage_band(t, x) && in_marriage_band(t, y) {
        let (px, py) = ((x - 0.1) * (-t + x - 1.0), (y - 0.1) * (-t + y - 1.0));
        (1.0 - t / 10.0) * px * px * py * py
    } else {
        0.0
    }
}

fn ex2_weight(t: f64, x: f64) -> f64 {
    if in_marriage_band(t, x) {
        (0.1 - x) * (-t + x - 1.0)
    } else {
        0.0
    }
}

fn ex2_death(t: f64, x: f64) -> f64 {
    if (0.0..=t + 1.0).contains(&x) {
        1.0 / (10.0 - t)
    } else {
        0.0
    }
}

fn ex2_birth(t: f64, x: f64, y: f64) -> f64 {
    if in_marriage_band(t, x) && in_marriage_band(t, y) {
        -9e12 * (t - 1.0) * (t + 1.0) / (10.0 * t + 9.0).powi(10)
    } else {
        0.0
    }
}

fn ex2_theta_factor(t: f64, x: f64) -> f64 {
    let d = 1.0 - 10.0 * x;
    (t - 10.0) * (10.0 * t + 9.0).powi(5) * d * d * (-t + x - 1.0) / 3e9
        + (1.0 - t / 10.0) * (t - x - 1.0)
}

fn ex2_theta_den(t: f64) -> f64 {
    // Horner form of the degree-8 polynomial.
    let coeffs = [
        1e8,
        72e7,
        2268e6,
        40824e5,
        45927e5,
        3306744e3,
        1488034800.0,
        21382637520.0,
        -51056953279.0,
    ];
    let p = coeffs.iter().fold(0.0, |acc, c| acc * t + c);
    (t - 10.0) * (10.0 * t + 9.0).powi(4) * p / 21e15 + 1.0
}

fn ex2_theta(t: f64, x: f64, y: f64) -> f64 {
    if !(in_marriage_band(t, x) && in_marriage_band(t, y)) {
        return 0.0;
    }
    let num = (-t * (10.0 * x * (10.0 * y + 199.0) + 1990.0 * y - 399.0) / 10000.0
        + 2.0 * x
        + 2.0 * y
        - 0.4)
        / (ex2_theta_factor(t, x) * ex2_theta_factor(t, y));
    // The stated solution is exact when Θ carries `den` as a factor: `den(t)`
    // coincides with the marriage denominator γ + ∫h s^m + ∫g s^f.
    let v = num * ex2_theta_den(t);
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Time-dependent coefficients built around a known solution on `t < 10`.
pub fn example2_problem() -> Problem {
    let bundle = CoefficientBundle {
        c_m: Arc::new(|t, x, _| ex2_death(t, x)),
        c_f: Arc::new(|t, y, _| ex2_death(t, y)),
        c_c: constant2(0.1),
        b_m: Arc::new(|t, x, y, _| ex2_birth(t, x, y)),
        b_f: Arc::new(|t, x, y, _| ex2_birth(t, x, y)),
        // The death rate is flat in age on the support.
        dc_m_dx: Some(constant1(0.0)),
        dc_f_dx: Some(constant1(0.0)),
        nonlinear: false,
    };
    let kernel = MarriageKernel {
        theta: Arc::new(ex2_theta),
        h: Arc::new(ex2_weight),
        g: Arc::new(ex2_weight),
        gamma: 1.0,
        a0: A0,
    };
    let initial = InitialData {
        u_m: Arc::new(|x| ex2_single(0.0, x)),
        u_f: Arc::new(|y| ex2_single(0.0, y)),
        u_c: Arc::new(|x, y| ex2_couples(0.0, x, y)),
    };
    let exact = ExactSolution {
        u_m: Arc::new(ex2_single),
        u_f: Arc::new(ex2_single),
        u_c: Arc::new(ex2_couples),
        valid_t: (0.0, 10.0),
    };
    Problem {
        name: "example2".into(),
        bundle,
        kernel,
        initial,
        t_end: 1.0,
        age_min: 0.0,
        age_max: 1.0,
        exact: Some(exact),
    }
}

/// `example1` (with its default γ) or `example2`.
pub fn problem_by_name(name: &str) -> Option<Problem> {
    match name {
        "example1" => Some(example1_problem(EXAMPLE1_GAMMA)),
        "example2" => Some(example2_problem()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_2d};
    use approx::assert_abs_diff_eq;

    #[test]
    fn example1_values() {
        let p = example1_problem(EXAMPLE1_GAMMA);
        assert_eq!((p.bundle.c_m)(0.3, 0.7, None), 0.1);
        assert_eq!((p.kernel.h)(0.0, 0.05), 0.0);
        assert_abs_diff_eq!((p.kernel.theta)(0.0, 0.5, 0.5), 0.4, epsilon = 1e-15);
        assert_eq!(p.kernel.a0, 0.1);
    }

    #[test]
    fn kernel_cutoff_by_sampling() {
        for p in [example1_problem(EXAMPLE1_GAMMA), example2_problem()] {
            for k in 0..200 {
                let t = k as f64 / 200.0;
                let x = 0.1 * (k as f64 / 200.0);
                assert_eq!(p.kernel.h_at(t, x), 0.0);
                assert_eq!((p.kernel.h)(t, x), 0.0);
                assert_eq!((p.kernel.g)(t, x), 0.0);
            }
        }
    }

    #[test]
    fn example2_values() {
        let p = example2_problem();
        let ex = p.exact.as_ref().unwrap();
        assert_abs_diff_eq!((ex.u_m)(0.0, 0.5), 0.75, epsilon = 1e-15);
        assert_eq!((ex.u_m)(0.4, 1.41), 0.0);
        assert_eq!((p.bundle.c_c)(0.2, 0.3, 0.4, None), 0.1);
        let mass = integrate(|x| (ex.u_m)(0.0, x), 0.0, 1.0, 1e-13);
        assert_abs_diff_eq!(mass, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn example2_birth_feeds_boundary_density() {
        // Newborn flux Σ b·u^c must equal the density at age 0.
        let p = example2_problem();
        let ex = p.exact.unwrap();
        for t in [0.0, 0.3, 0.8] {
            let born = integrate_2d(
                |x, y| (p.bundle.b_m)(t, x, y, None) * (ex.u_c)(t, x, y),
                (0.1, t + 1.0),
                (0.1, t + 1.0),
                1e-12,
            );
            assert_abs_diff_eq!(born, (ex.u_m)(t, 0.0), epsilon = 1e-9);
        }
    }

    /// Residual of `∂_t u + ∂_x u + c u` by central differences.
    fn male_residual(p: &Problem, t: f64, x: f64) -> f64 {
        let u = &p.exact.as_ref().unwrap().u_m;
        let h = 1e-5;
        let dt = (u(t + h, x) - u(t - h, x)) / (2.0 * h);
        let dx = (u(t, x + h) - u(t, x - h)) / (2.0 * h);
        dt + dx + (p.bundle.c_m)(t, x, None) * u(t, x)
    }

    #[test]
    fn example2_male_residual() {
        let p = example2_problem();
        for k in 1..50 {
            let t = 0.9 * k as f64 / 50.0;
            let x = 0.05 + 0.9 * (t + 1.0) * ((k * 37 % 50) as f64 / 50.0);
            assert!(male_residual(&p, t, x).abs() <= 1e-3, "t={t} x={x}");
        }
    }

    #[test]
    fn example2_denominator_matches_market() {
        let p = example2_problem();
        let ex = p.exact.as_ref().unwrap();
        for t in [0.0, 0.4, 0.9] {
            let singles = |x: f64| {
                (ex.u_m)(t, x) - integrate(|y| (ex.u_c)(t, x, y), 0.1, t + 1.0, 1e-12)
            };
            let hs = integrate(|x| p.kernel.h_at(t, x) * singles(x), 0.1, t + 1.0, 1e-11);
            assert_abs_diff_eq!(ex2_theta_den(t), p.kernel.gamma + 2.0 * hs, epsilon = 1e-9);
        }
    }

    #[test]
    fn example2_couples_equation_holds() {
        // ∂_t u^c + ∂_x u^c + ∂_y u^c + c^c u^c = T with the continuous
        // marriage function built from the exact singles.
        let p = example2_problem();
        let ex = p.exact.as_ref().unwrap();
        let k = &p.kernel;
        let t = 0.4;
        let singles = |x: f64| {
            (ex.u_m)(t, x) - integrate(|y| (ex.u_c)(t, x, y), 0.1, t + 1.0, 1e-12)
        };
        let hs = integrate(|x| k.h_at(t, x) * singles(x), 0.1, t + 1.0, 1e-11);
        let denom = k.gamma + 2.0 * hs;
        for &(x, y) in &[(0.3, 0.6), (0.9, 1.2), (0.5, 0.5)] {
            let h = 1e-5;
            let u = |t, x, y| (ex.u_c)(t, x, y);
            let lhs = (u(t + h, x + h, y + h) - u(t - h, x - h, y - h)) / (2.0 * h)
                + 0.1 * u(t, x, y);
            let rhs = k.pair_rate(t, x, y) * singles(x) * singles(y) / denom;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-6 * (1.0 + rhs.abs()));
        }
    }
}
