use std::sync::Arc;

use approx::assert_abs_diff_eq;

use super::*;
use crate::model::{example1_problem, marriage_quotient, CohortView, EXAMPLE1_GAMMA};

fn zero_rates(mut p: Problem) -> Problem {
    p.bundle.c_m = Arc::new(|_, _, _| 0.0);
    p.bundle.c_f = Arc::new(|_, _, _| 0.0);
    p.bundle.c_c = Arc::new(|_, _, _, _| 0.0);
    p.bundle.b_m = Arc::new(|_, _, _, _| 0.0);
    p.bundle.b_f = Arc::new(|_, _, _, _| 0.0);
    p.kernel.theta = Arc::new(|_, _, _| 0.0);
    p
}

fn ex1() -> Problem {
    example1_problem(EXAMPLE1_GAMMA)
}

#[test]
fn init_unit_density() {
    let s = init_internal(&ex1(), 0.1, Variant::Simplified).unwrap();
    assert_eq!(s.len(), 10);
    for k in 0..10 {
        assert_abs_diff_eq!(s.male_m[k], 0.1, epsilon = 1e-13);
        assert_abs_diff_eq!(s.male_x[k], 0.05 + 0.1 * k as f64, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(s.male_total(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.couple_m[37], 0.01, epsilon = 1e-13);
    assert_eq!((s.couple_x[37], s.couple_y[37]), (s.male_x[3], s.female_y[7]));
}

#[test]
fn init_empty_cells_sit_at_zero() {
    let mut p = ex1();
    p.initial.u_m = Arc::new(|x| if (0.5..1.0).contains(&x) { 1.0 } else { 0.0 });
    let s = init_internal(&p, 0.1, Variant::Simplified).unwrap();
    assert_eq!((s.male_m[2], s.male_x[2]), (0.0, 0.0));
    assert_abs_diff_eq!(s.male_x[7], 0.75, epsilon = 1e-12);
}

#[test]
fn init_rejects_escaping_support() {
    let mut p = ex1();
    p.initial.u_f = Arc::new(|_| 1.0);
    assert!(matches!(
        init_internal(&p, 0.1, Variant::Simplified),
        Err(EbtError::SupportEscapesGrid { population: "female", .. })
    ));
    assert!(matches!(
        init_internal(&ex1(), 0.3, Variant::Simplified),
        Err(EbtError::NotDivisible { .. })
    ));
}

#[test]
fn attach_boundary_rules() {
    let p = ex1();
    let s0 = init_internal(&p, 0.1, Variant::Simplified).unwrap();
    let s = attach_boundary(&s0);
    assert_eq!(s.b, 0);
    assert_eq!(attach_boundary(&s).b, -1);
    assert_eq!((s.male_m[0], s.male_x[0]), (0.0, 0.0));
    let n = s.len();
    for j in 0..n {
        assert_eq!(s.couple_m[j], 0.0);
        assert_eq!((s.couple_x[j], s.couple_y[j]), (0.0, s.female_y[j]));
        assert_eq!((s.couple_x[j * n], s.couple_y[j * n]), (s.male_x[j], 0.0));
    }
    let o = attach_boundary(&init_internal(&p, 0.1, Variant::Original).unwrap());
    for j in 0..n {
        assert_eq!((o.couple_x[j * n], o.couple_y[j * n]), (0.0, 0.0));
        assert_eq!((o.couple_xt[j], o.couple_yt[j]), (0.0, 0.0));
    }
}

fn eval_rhs(state: &CohortState, p: &Problem) -> Vec<f64> {
    let packed = Packed::new(state);
    let y = packed.pack(state);
    let mut dy = vec![f64::NAN; y.len()];
    match state.variant {
        Variant::Simplified => rhs_simplified(&packed, p, 0.0, &y, &mut dy),
        Variant::Original => rhs_original(&packed, p, 0.0, &y, &mut dy),
    }
    dy
}

#[test]
fn rhs_pure_transport() {
    let p = zero_rates(ex1());
    for v in [Variant::Simplified, Variant::Original] {
        let s = attach_boundary(&init_internal(&p, 0.1, v).unwrap());
        let dy = eval_rhs(&s, &p);
        let packed = Packed::new(&s);
        for k in packed.mass_indices() {
            assert_eq!(dy[k], 0.0);
        }
        if v == Variant::Original {
            // x̃ grows at rate m under pure transport.
            let n = s.len();
            let off = 2 * n + 2 + n * n;
            for k in 0..n * n {
                assert_abs_diff_eq!(dy[off + k], s.couple_m[k], epsilon = 1e-15);
            }
        }
    }
}

#[test]
fn rhs_boundary_births() {
    let mut p = ex1();
    p.kernel.theta = Arc::new(|_, _, _| 0.0);
    let mut s = attach_boundary(&init_internal(&p, 0.1, Variant::Simplified).unwrap());
    s.couple_m.iter_mut().for_each(|m| *m = 0.0);
    let n = s.len();
    s.couple_m[5 * n + 5] = 1.0;
    s.male_m[0] = 0.3;
    let dy = eval_rhs(&s, &p);
    assert_abs_diff_eq!(dy[0], 10.0 - 0.1 * 0.3, epsilon = 1e-14);
    assert_abs_diff_eq!(dy[n], 10.0, epsilon = 1e-14);
}

#[test]
fn rhs_influx_matches_marriage_quotient() {
    let p = ex1();
    let mut s = attach_boundary(&init_internal(&p, 0.1, Variant::Simplified).unwrap());
    // Leave some singles so the influx does not vanish.
    s.couple_m.iter_mut().for_each(|m| *m *= 0.5);
    let dy = eval_rhs(&s, &p);
    let n = s.len();
    let view = CohortView {
        male_m: &s.male_m,
        male_x: &s.male_x,
        female_m: &s.female_m,
        female_y: &s.female_y,
        couple_m: &s.couple_m,
        couple_x: &s.couple_x,
        couple_y: &s.couple_y,
    };
    for (i, j) in [(3, 4), (7, 2), (0, 5), (10, 10)] {
        let k = i * n + j;
        let q = marriage_quotient(&p.kernel, s.t, &view, i, j);
        assert_abs_diff_eq!(dy[2 * n + k] + 0.1 * s.couple_m[k], q, epsilon = 1e-15);
    }
}

#[test]
fn macro_step_exponential_decay() {
    let mut p = zero_rates(ex1());
    p.bundle.c_m = Arc::new(|_, _, _| 0.1);
    p.initial.u_m = Arc::new(|x| if (0.0..0.1).contains(&x) { 10.0 } else { 0.0 });
    let s = attach_boundary(&init_internal(&p, 0.1, Variant::Simplified).unwrap());
    let (next, stats) = macro_step(&s, &p, &StepConfig::new(0.1)).unwrap();
    assert_abs_diff_eq!(next.male_m[2], (-0.01f64).exp(), epsilon = 1e-10);
    assert_eq!(next.b, s.b - 1);
    assert_eq!((next.male_m[0], next.male_x[0]), (0.0, 0.0));
    assert_eq!(stats.negative_excursions, 0);
}

#[test]
fn run_guards_and_clock() {
    let p = ex1();
    let out = run(&p, Variant::Simplified, &StepConfig::new(0.1), 1.0).unwrap();
    assert_eq!(out.stats.macro_steps, 10);
    assert_abs_diff_eq!(out.state.t, 1.0, epsilon = 1e-12);
    assert_eq!(out.state.len(), 21);
    let err = run(&p, Variant::Simplified, &StepConfig::new(0.2), 1.0).unwrap_err();
    assert!(err.to_string().contains("dt exceeds a0"));
    assert!(matches!(
        run(&p, Variant::Simplified, &StepConfig::new(0.1), 1.05),
        Err(EbtError::NotDivisible { what: "T", .. })
    ));
}

#[test]
fn zero_rates_conserve_and_transport() {
    let p = zero_rates(ex1());
    for v in [Variant::Simplified, Variant::Original] {
        let init = attach_boundary(&init_internal(&p, 0.1, v).unwrap());
        let out = run(&p, v, &StepConfig::new(0.1), 1.0).unwrap();
        let s = out.state;
        let n0 = init.len();
        let shift = s.len() - n0;
        for k in 1..n0 {
            assert_abs_diff_eq!(s.male_m[k + shift], init.male_m[k], epsilon = 1e-12);
            assert_abs_diff_eq!(s.male_x[k + shift], init.male_x[k] + 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.couple_total(), init.couple_total(), epsilon = 1e-12);
    }
}

#[test]
fn simplified_couples_track_singles_locations() {
    let p = ex1();
    let out = run(&p, Variant::Simplified, &StepConfig::new(0.1), 0.5).unwrap();
    let s = out.state;
    let n = s.len();
    for i in 0..n {
        for j in 0..n {
            assert_eq!(s.couple_x[i * n + j], s.male_x[i]);
            assert_eq!(s.couple_y[i * n + j], s.female_y[j]);
        }
    }
}

#[test]
fn boundary_couples_stay_empty() {
    let p = ex1();
    let cfg = StepConfig::new(0.1);
    let mut state = attach_boundary(&init_internal(&p, 0.1, Variant::Simplified).unwrap());
    for _ in 0..5 {
        // The boundary row and column are empty at the end of each step,
        // i.e. just before internalization shifts them inward.
        let packed = Packed::new(&state);
        let mut y = packed.pack(&state);
        let len = y.len();
        let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; len]);
        let f = |s: f64, y: &[f64], dy: &mut [f64]| rhs_simplified(&packed, &p, s, y, dy);
        let h = cfg.dt / cfg.substeps as f64;
        let n = state.len();
        for sub in 0..cfg.substeps {
            rk_step(&f, 4, sub as f64 * h, h, &mut y, &mut scratch);
            for j in 0..n {
                assert_eq!(y[2 * n + j], 0.0);
                assert_eq!(y[2 * n + j * n], 0.0);
            }
        }
        state = macro_step(&state, &p, &cfg).unwrap().0;
    }
}

#[test]
fn schemes_agree_without_births() {
    let mut p = ex1();
    p.bundle.b_m = Arc::new(|_, _, _, _| 0.0);
    p.bundle.b_f = Arc::new(|_, _, _, _| 0.0);
    let cfg = StepConfig::new(0.1);
    let a = run(&p, Variant::Simplified, &cfg, 0.5).unwrap().state;
    let b = run(&p, Variant::Original, &cfg, 0.5).unwrap().state;
    for k in 0..a.couple_m.len() {
        assert_abs_diff_eq!(a.couple_m[k], b.couple_m[k], epsilon = 1e-12);
        if a.couple_m[k] > 1e-9 {
            assert_abs_diff_eq!(a.couple_x[k], b.couple_x[k], epsilon = 1e-9);
        }
    }
}

#[test]
fn measures_export() {
    let s = attach_boundary(&init_internal(&ex1(), 0.1, Variant::Simplified).unwrap());
    let (m, f, c) = to_measures(&s);
    assert_eq!((m.len(), f.len(), c.len()), (11, 11, 121));
    assert_eq!(m.point(3), &[s.male_x[3]]);
    assert_abs_diff_eq!(c.total_mass(), 1.0, epsilon = 1e-12);
}

#[test]
fn snapshot_files() {
    let p = ex1();
    let cfg = StepConfig::new(0.1);
    let out = run(&p, Variant::Simplified, &cfg, 0.2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = RunManifest::new(&p, Variant::Simplified, &cfg, 0.2, out.stats);
    write_snapshot(&out.state, &manifest, dir.path(), "csv").unwrap();
    for f in ["male.csv", "female.csv", "couples.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists());
    }
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(text.contains("\"variant\": \"simplified\""));
}
