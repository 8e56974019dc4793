mod common;

use mfdyn::macroflow::{self, MacroOptions};
use mfdyn::ode::OdeOptions;
use mfdyn::refexample::{self, QubitExampleConfig};
use mfdyn::Error;
use proptest::prelude::*;

use common::*;

const GOLDEN_OMEGA3_AT_1: f64 = 0.26803068331592606;

fn tight() -> OdeOptions {
    OdeOptions { rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() }
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    // panel = (a, b, f(a), f(mid), f(b), Simpson estimate)
    fn rec<F: Fn(f64) -> f64>(f: &F, p: (f64, f64, f64, f64, f64, f64), eps: f64, depth: u32) -> f64 {
        let (a, b, fa, fm, fb, whole) = p;
        let m = 0.5 * (a + b);
        let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, (a, m, fa, flm, fm, left), eps / 2.0, depth - 1) + rec(f, (m, b, fm, frm, fb, right), eps / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, (a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb)), eps, 40)
}

#[test]
fn analytic_golden_value() {
    let cfg = QubitExampleConfig::new([0.3, 0.0, 0.4]).unwrap();
    let w = refexample::analytic_omega(&cfg, 1.0).unwrap();
    assert!((w[2] - GOLDEN_OMEGA3_AT_1).abs() < 1e-14);
    assert_eq!(w[1], 0.0);
    let xi2: f64 = w.iter().map(|x| x * x).sum();
    assert!((xi2 - 0.25).abs() < 1e-14);
}

#[test]
fn integrated_trajectory_matches_golden_value() {
    let m = example();
    let traj = macroflow::integrate_macro_at(&m, &example_omega0(), &[0.0, 0.5, 1.0], &tight()).unwrap();
    let w = refexample::omega_from_basis(&traj.states[2]);
    assert!((w[2] - GOLDEN_OMEGA3_AT_1).abs() < 1e-10, "{}", w[2]);
}

#[test]
fn numerical_flow_matches_closed_form() {
    let m = example();
    let cfg = QubitExampleConfig::new([0.3, 0.0, 0.4]).unwrap();
    let opts = MacroOptions { ode: tight(), grid_points: 41, extra_times: vec![] };
    let traj = macroflow::integrate_macro(&m, &example_omega0(), 4.0, &opts).unwrap();
    for (k, t) in traj.times.iter().enumerate() {
        let exact = refexample::analytic_omega(&cfg, *t).unwrap();
        let got = refexample::omega_from_basis(&traj.states[k]);
        assert!(dist(&exact, &got) < 1e-9, "t={t}");
        let ma = refexample::analytic_m(&cfg, *t);
        let mn = traj.propagators[k].view((0, 0), (3, 3)).into_owned();
        assert!((ma - mn).norm() < 1e-7, "t={t}");
    }
    // continuous extension between grid points
    let mid = traj.omega_at(1.234).unwrap();
    let exact = refexample::analytic_omega(&cfg, 1.234).unwrap();
    assert!(dist(&exact, &refexample::omega_from_basis(&mid)) < 1e-7);
}

#[test]
fn closed_form_solves_the_equation() {
    let cfg = QubitExampleConfig::new([0.2, -0.25, 0.1]).unwrap();
    let h = 1e-5;
    for t in [0.0, 0.3, 1.7, 6.0] {
        let t = t + h;
        let w = refexample::analytic_omega(&cfg, t).unwrap();
        let wp = refexample::analytic_omega(&cfg, t + h).unwrap();
        let wm = refexample::analytic_omega(&cfg, t - h).unwrap();
        let rhs = refexample::drift_spin(&w) * nalgebra::DVector::from_column_slice(&w);
        for i in 0..3 {
            assert!(((wp[i] - wm[i]) / (2.0 * h) - rhs[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn alpha_matches_quadrature() {
    for w0 in [[0.3, 0.0, 0.4], [0.1, 0.1, -0.3], [0.0, 0.2, 0.0], [0.45, 0.0, 0.2]] {
        let cfg = QubitExampleConfig::new(w0).unwrap();
        let b = cfg.b.unwrap();
        let x = cfg.xi;
        let f = |u: f64| (b * x).cosh() / (x * (u + b)).cosh();
        for t in [0.5, 2.0, 10.0] {
            let q = simpson(&f, 0.0, t, 1e-13);
            assert!((refexample::analytic_alpha(&cfg, t) - q).abs() < 1e-10, "{w0:?} t={t}");
        }
    }
}

#[test]
fn closed_form_propagator_is_a_rotation() {
    let cfg = QubitExampleConfig::new([0.2, -0.15, 0.3]).unwrap();
    assert_eq!(refexample::analytic_alpha(&cfg, 0.0), 0.0);
    let h = 1e-6;
    assert!((refexample::analytic_alpha(&cfg, h) / h - 1.0).abs() < 1e-6);
    assert!((refexample::analytic_m(&cfg, 0.0) - nalgebra::DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
    for t in [0.3, 1.0, 4.0] {
        let m = refexample::analytic_m(&cfg, t);
        assert!((m.transpose() * &m - nalgebra::DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        assert!((m.determinant() - 1.0).abs() < 1e-12);
    }
    let polar = QubitExampleConfig::new([0.0, 0.0, 0.3]).unwrap();
    assert_eq!(refexample::analytic_m(&polar, 2.0), nalgebra::DMatrix::<f64>::identity(3, 3));
}

#[test]
fn polar_initial_state_is_stationary() {
    let m = example();
    let w0 = refexample::omega_to_basis(&[0.0, 0.0, 0.35]);
    let traj = macroflow::integrate_macro(&m, &w0, 3.0, &MacroOptions::default()).unwrap();
    for w in &traj.states {
        assert!(dist(w, &w0) < 1e-14);
    }
    let cfg = QubitExampleConfig::new([0.0, 0.0, 0.35]).unwrap();
    assert!(cfg.b.is_none());
    assert_eq!(refexample::analytic_omega(&cfg, 5.0).unwrap(), [0.0, 0.0, 0.35]);
}

#[test]
fn long_time_limit_is_the_south_pole() {
    let cfg = QubitExampleConfig::new([0.3, 0.0, 0.4]).unwrap();
    let w = refexample::analytic_omega(&cfg, 200.0).unwrap();
    assert!(dist(&w, &[0.0, 0.0, -0.5]) < 1e-12);
    let w = refexample::analytic_omega(&cfg, 1e6).unwrap();
    assert!(w.iter().all(|x| x.is_finite()));
}

#[test]
fn closed_form_rejects_bad_input() {
    assert!(matches!(QubitExampleConfig::new([0.4, 0.0, 0.4]), Err(Error::InvalidState(_))));
    let cfg = QubitExampleConfig::new([0.3, 0.0, 0.4]).unwrap();
    assert!(matches!(refexample::analytic_omega(&cfg, -1.0), Err(Error::OutOfRange { .. })));
}

#[test]
fn integration_rejects_bad_input() {
    let m = example();
    let opts = MacroOptions::default();
    assert!(matches!(macroflow::integrate_macro(&m, &example_omega0(), 0.0, &opts), Err(Error::OutOfRange { .. })));
    assert!(matches!(
        macroflow::integrate_macro(&m, &[0.1, 0.2], 1.0, &opts),
        Err(Error::DimensionMismatch { expected: 4, got: 2 })
    ));
    let outside = refexample::omega_to_basis(&[0.6, 0.0, 0.0]);
    assert!(matches!(macroflow::integrate_macro(&m, &outside, 1.0, &opts), Err(Error::InvalidState(_))));
    let traj = macroflow::integrate_macro(&m, &example_omega0(), 1.0, &opts).unwrap();
    assert!(matches!(traj.omega_at(1.5), Err(Error::OutOfRange { .. })));
}

#[test]
fn invariants_hold_for_random_models() {
    let opts = MacroOptions { ode: tight(), grid_points: 21, extra_times: vec![] };
    for (name, m, w0) in model_set(3, 11) {
        let traj = macroflow::integrate_macro(&m, &w0, 2.0, &opts).unwrap();
        let inv = traj.invariants(&m);
        assert!(inv.orthogonality < 1e-9, "{name}: {inv:?}");
        assert!(inv.conservation < 1e-10, "{name}: {inv:?}");
        assert!(inv.propagator_consistency < 1e-9, "{name}: {inv:?}");
        assert!(inv.identity_component_drift < 1e-12, "{name}: {inv:?}");
        assert!(inv.min_state_eig > -1e-9, "{name}: {inv:?}");
        let semi = macroflow::check_semigroup(&m, &traj, 0.7, 1.1, &tight()).unwrap();
        assert!(semi < 1e-9, "{name}: {semi}");
        let plain = macroflow::evolve_omega(&m, &w0, &traj.times, &tight()).unwrap();
        assert!(dist(&plain[20], &traj.states[20]) < 1e-9, "{name}");
    }
}

#[test]
fn grid_merges_extra_times() {
    let g = macroflow::merge_times(macroflow::uniform_grid(1.0, 5), &[0.3, 0.5]);
    assert_eq!(g, vec![0.0, 0.25, 0.3, 0.5, 0.75, 1.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn qubit_flow_tracks_closed_form(
        x in -0.3f64..0.3, y in -0.3f64..0.3, z in -0.3f64..0.3, t in 0.1f64..5.0,
    ) {
        let m = example();
        let w0 = [x, y, z];
        let cfg = QubitExampleConfig::new(w0).unwrap();
        let traj = macroflow::integrate_macro_at(&m, &refexample::omega_to_basis(&w0), &[0.0, t], &tight()).unwrap();
        let got = refexample::omega_from_basis(&traj.states[1]);
        prop_assert!(dist(&got, &refexample::analytic_omega(&cfg, t).unwrap()) < 1e-9);
    }

    #[test]
    fn random_flow_stays_on_sphere(seed in 0u64..1000) {
        let mut r = rng(seed);
        let m = random_model(&mut r, 3, 1.0);
        let w0 = random_state(&mut r, &m);
        let traj = macroflow::integrate_macro_at(&m, &w0, &[0.0, 0.5, 1.5], &OdeOptions::default()).unwrap();
        let inv = traj.invariants(&m);
        prop_assert!(inv.conservation < 1e-8 && inv.orthogonality < 1e-7);
    }
}
