use ebt_core::measures::AtomicMeasure;
use ebt_core::model::{
    continuous_marriage_density, example1_problem, example2_problem, marriage_quotient,
    marriage_terms_original, CohortView, MarriageKernel, EXAMPLE1_GAMMA,
};
use proptest::prelude::*;

fn kernels() -> [MarriageKernel; 2] {
    [example1_problem(EXAMPLE1_GAMMA).kernel, example2_problem().kernel]
}

/// Up to four cohorts per sex with small couple masses, so singles stay
/// positive.
fn cohorts() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|n| {
        (
            prop::collection::vec(0.5..1.0f64, n),
            prop::collection::vec(0.5..1.0f64, n),
            prop::collection::vec(0.0..2.0f64, n),
            prop::collection::vec(0.0..2.0f64, n),
            prop::collection::vec(0.0..0.1f64, n * n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quotient_nonnegative_and_vanishes_with_a_factor(
        (mm, mf, x, y, c) in cohorts(), t in 0.0..1.0f64, which in 0usize..2,
    ) {
        let k = &kernels()[which];
        let n = mm.len();
        let cx: Vec<f64> = (0..n * n).map(|q| x[q / n]).collect();
        let cy: Vec<f64> = (0..n * n).map(|q| y[q % n]).collect();
        let view = CohortView {
            male_m: &mm, male_x: &x, female_m: &mf, female_y: &y,
            couple_m: &c, couple_x: &cx, couple_y: &cy,
        };
        for i in 0..n {
            for j in 0..n {
                let q = marriage_quotient(k, t, &view, i, j);
                prop_assert!(q >= 0.0);
                if x[i] < k.a0 || y[j] < k.a0 {
                    prop_assert_eq!(q, 0.0);
                }
                // Original terms with couples sitting at the singles' locations.
                let o = marriage_terms_original(k, t, &view, i, j);
                prop_assert!((o.n / o.d - q).abs() <= 1e-12 * q.abs().max(1.0));
            }
        }
        // Emptying one male cohort's singles zeroes its whole row.
        let mut drained = c.clone();
        for j in 0..n {
            drained[j] = 0.0;
        }
        drained[0] = mm[0];
        let view = CohortView { couple_m: &drained, ..view };
        for j in 0..n {
            prop_assert_eq!(marriage_quotient(k, t, &view, 0, j), 0.0);
        }
    }

    #[test]
    fn kernel_cutoff_below_a0(t in 0.0..1.0f64, frac in 0.0..1.0f64, which in 0usize..2) {
        let k = &kernels()[which];
        let age = frac * k.a0 * (1.0 - 1e-12);
        prop_assert_eq!((k.h)(t, age), 0.0);
        prop_assert_eq!((k.g)(t, age), 0.0);
    }

    #[test]
    fn marriage_density_mass_bound(
        sm in prop::collection::vec((0.0..2.0f64, 0.0..1.0f64), 1..8),
        sf in prop::collection::vec((0.0..2.0f64, 0.0..1.0f64), 1..8),
        t in 0.0..1.0f64, which in 0usize..2,
    ) {
        let k = &kernels()[which];
        let m = AtomicMeasure::from_pairs_1d(&sm).unwrap();
        let f = AtomicMeasure::from_pairs_1d(&sf).unwrap();
        let out = continuous_marriage_density(t, &m, &f, k);
        let mut sup = 0.0f64;
        for &(x, _) in &sm {
            for &(y, _) in &sf {
                sup = sup.max(k.pair_rate(t, x, y).abs());
            }
        }
        let bound = sup / k.gamma * m.total_mass() * f.total_mass();
        prop_assert!(out.total_mass() <= bound * (1.0 + 1e-12) + 1e-15);
    }
}
