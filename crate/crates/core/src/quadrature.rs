//! Adaptive Gauss–Kronrod (7, 15) quadrature on intervals and rectangles.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let d = h * XGK[k];
        let s = f(c - d) + f(c + d);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (val, err) = gk15(f, a, b);
    if err <= tol.max(1e-15 * val.abs()) || depth >= MAX_DEPTH || b - a <= f64::EPSILON * a.abs() {
        return val;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth + 1) + adapt(f, m, b, 0.5 * tol, depth + 1)
}

/// `∫_a^b f` to absolute tolerance `tol` by recursive bisection.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    adapt(&mut f, a, b, tol, 0)
}

/// `∫_{x0}^{x1} ∫_{y0}^{y1} f(x, y) dy dx` as an iterated integral; the
/// inner integrals use a tolerance scaled by the outer interval length.
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    tol: f64,
) -> f64 {
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let inner_tol = tol / (x1 - x0);
    integrate(|x| integrate(|y| f(x, y), y0, y1, inner_tol), x0, x1, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_are_exact() {
        // Degree 20 is beyond the Gauss rule, so this exercises adaptivity.
        assert_abs_diff_eq!(integrate(|x| x.powi(20), 0.0, 1.0, 1e-13), 1.0 / 21.0, epsilon = 1e-13);
        assert_abs_diff_eq!(integrate(|x| 3.0 * x * x, -1.0, 2.0, 1e-13), 9.0, epsilon = 1e-12);
        assert_eq!(integrate(|_| 1.0, 1.0, 1.0, 1e-10), 0.0);
    }

    #[test]
    fn kink_and_jump() {
        assert_abs_diff_eq!(integrate(|x: f64| x.abs(), -1.0, 2.0, 1e-11), 2.5, epsilon = 1e-10);
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        assert_abs_diff_eq!(integrate(step, 0.0, 1.0, 1e-11), 0.3, epsilon = 1e-10);
    }

    #[test]
    fn rectangle() {
        let v = integrate_2d(|x, y| x * y * y, (0.0, 2.0), (0.0, 3.0), 1e-12);
        assert_abs_diff_eq!(v, 18.0, epsilon = 1e-10);
    }
}
