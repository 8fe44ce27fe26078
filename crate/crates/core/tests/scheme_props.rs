use std::sync::Arc;

use ebt_core::ebt::{attach_boundary, init_internal, run, to_measures, StepConfig, Variant};
use ebt_core::experiments::{measure_errors, MetricConfig, ReferenceKind, ReferenceSolution};
use ebt_core::model::{example1_problem, Problem, EXAMPLE1_GAMMA};
use proptest::prelude::*;

fn zero_rates(mut p: Problem) -> Problem {
    p.bundle.c_m = Arc::new(|_, _, _| 0.0);
    p.bundle.c_f = Arc::new(|_, _, _| 0.0);
    p.bundle.c_c = Arc::new(|_, _, _, _| 0.0);
    p.bundle.b_m = Arc::new(|_, _, _, _| 0.0);
    p.bundle.b_f = Arc::new(|_, _, _, _| 0.0);
    p.kernel.theta = Arc::new(|_, _, _| 0.0);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zero_rates_conserve_mass_and_shift_locations(
        halvings in 0u32..3, steps in 1usize..8, original in any::<bool>(),
    ) {
        let dt = 0.1 / 2f64.powi(halvings as i32);
        let t_end = steps as f64 * dt;
        let variant = if original { Variant::Original } else { Variant::Simplified };
        let p = zero_rates(example1_problem(EXAMPLE1_GAMMA));
        let init = attach_boundary(&init_internal(&p, dt, variant).unwrap());
        let end = run(&p, variant, &StepConfig::new(dt), t_end).unwrap().state;
        let shift = end.len() - init.len();
        prop_assert_eq!(shift, steps);
        for k in 1..init.len() {
            prop_assert!((end.male_m[k + shift] - init.male_m[k]).abs() <= 1e-12);
            prop_assert!((end.female_m[k + shift] - init.female_m[k]).abs() <= 1e-12);
            prop_assert!((end.male_x[k + shift] - init.male_x[k] - t_end).abs() <= 1e-12);
        }
        let total = |m: &[f64]| m.iter().sum::<f64>();
        prop_assert!((total(&end.male_m) - total(&init.male_m)).abs() <= 1e-12);
        prop_assert!((end.couple_total() - init.couple_total()).abs() <= 1e-12);
    }
}

#[test]
fn unclamped_excursions_shrink_with_substeps() {
    let p = example1_problem(EXAMPLE1_GAMMA);
    for variant in [Variant::Simplified, Variant::Original] {
        let excursion = |substeps| {
            let cfg = StepConfig { clamp: false, ..StepConfig::new(0.1).with_substeps(substeps) };
            -run(&p, variant, &cfg, 1.0).unwrap().stats.min_mass
        };
        let mut prev = excursion(1);
        for s in [2, 4, 8] {
            let e = excursion(s);
            assert!(e >= 0.0);
            assert!(e <= prev / 2.0 || e == 0.0, "{variant}: {e:e} after {prev:e}");
            prev = e;
        }
    }
}

#[test]
fn self_convergence_is_first_order() {
    // Distances between successive halvings shrink by a factor of two.
    let p = example1_problem(EXAMPLE1_GAMMA);
    let metric = MetricConfig::default();
    let states: Vec<_> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| run(&p, Variant::Simplified, &StepConfig::new(dt), 1.0).unwrap().state)
        .collect();
    let gap = |a: usize, b: usize| {
        let (m, f, c) = to_measures(&states[a]);
        let r = ReferenceSolution::from_state(&states[b], ReferenceKind::Exact);
        measure_errors((&m, &f, &c), (&r.male, &r.female, &r.couples), &metric)
            .unwrap()
            .err_flat()
    };
    let (coarse, fine) = (gap(0, 1), gap(1, 2));
    let q = (coarse / fine).log2();
    assert!((q - 1.0).abs() <= 0.2, "order {q} from {coarse:e}, {fine:e}");
}

#[test]
fn variants_agree_without_births() {
    // With no newborns the boundary cohorts stay empty and both variants
    // integrate the same internal dynamics.
    let mut p = example1_problem(EXAMPLE1_GAMMA);
    p.bundle.b_m = Arc::new(|_, _, _, _| 0.0);
    p.bundle.b_f = Arc::new(|_, _, _, _| 0.0);
    let cfg = StepConfig::new(0.05).with_substeps(16);
    let (sm, sf, sc) = to_measures(&run(&p, Variant::Simplified, &cfg, 1.0).unwrap().state);
    let (om, of, oc) = to_measures(&run(&p, Variant::Original, &cfg, 1.0).unwrap().state);
    let err = measure_errors((&sm, &sf, &sc), (&om, &of, &oc), &MetricConfig::default()).unwrap();
    assert!(err.err_flat() <= 1e-6, "{:e}", err.err_flat());
}
