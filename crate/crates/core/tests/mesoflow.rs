mod common;

use mfdyn::algebra::Model;
use mfdyn::linalg::{self, CMat, RMat, I};
use mfdyn::macroflow::{self, MacroOptions};
use mfdyn::mesoflow::{self, FlowPoint, SymplecticForm, WeylDescriptor};
use mfdyn::ode::OdeOptions;
use mfdyn::Error;
use proptest::prelude::*;

use common::*;

fn tight() -> OdeOptions {
    OdeOptions { rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() }
}

fn sigma_oracle(m: &Model, w: &[f64]) -> RMat {
    let rho = m.basis.rho(w);
    let v = &m.basis.v;
    RMat::from_fn(m.n(), m.n(), |a, b| (linalg::trace_product(&rho, &linalg::commutator(&v[a], &v[b])) * (-I)).re)
}

/// Fixed-step RK4 for (ω, X, Y) assembled from the public building blocks.
fn rk4_flow(m: &Model, w0: &[f64], t: f64, steps: usize) -> (Vec<f64>, RMat, RMat) {
    let n = m.n();
    let f = |w: &[f64], x: &RMat, y: &RMat| {
        let s = mesoflow::sigma_real(m, w);
        let d = macroflow::drift_real(m, w);
        let q = mesoflow::q_real(m, &s, &d);
        let dw = (&d * nalgebra::DVector::from_column_slice(w)).as_slice().to_vec();
        let dy = &s * &m.coeffs.a_re * s.transpose() + &q * y + y * q.transpose();
        (dw, &q * x, dy)
    };
    let add = |w: &[f64], dw: &[f64], h: f64| -> Vec<f64> { w.iter().zip(dw).map(|(a, b)| a + h * b).collect() };
    let (mut w, mut x, mut y) = (w0.to_vec(), RMat::identity(n, n), RMat::zeros(n, n));
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = f(&w, &x, &y);
        let k2 = f(&add(&w, &k1.0, h / 2.0), &(&x + k1.1.scale(h / 2.0)), &(&y + k1.2.scale(h / 2.0)));
        let k3 = f(&add(&w, &k2.0, h / 2.0), &(&x + k2.1.scale(h / 2.0)), &(&y + k2.2.scale(h / 2.0)));
        let k4 = f(&add(&w, &k3.0, h), &(&x + k3.1.scale(h)), &(&y + k3.2.scale(h)));
        for (i, wi) in w.iter_mut().enumerate() {
            *wi += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
        }
        x += (k1.1 + k2.1.scale(2.0) + k3.1.scale(2.0) + k4.1).scale(h / 6.0);
        y += (k1.2 + k2.2.scale(2.0) + k3.2.scale(2.0) + k4.2).scale(h / 6.0);
    }
    (w, x, y)
}

#[test]
fn sigma_of_the_up_state() {
    let m = example();
    let w = vec![0.0, 0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
    let s = mesoflow::symplectic_form(&m, &w).unwrap().sigma;
    let mut want = RMat::zeros(4, 4);
    want[(0, 1)] = 1.0;
    want[(1, 0)] = -1.0;
    assert!((s - want).norm() < 1e-15);
}

#[test]
fn sigma_vanishes_on_the_maximally_mixed_state() {
    let mut r = rng(2);
    for d in 2..=4 {
        let m = random_model(&mut r, d, 1.0);
        let w = m.basis.omega(&CMat::identity(d, d).scale(1.0 / d as f64));
        assert!(mesoflow::sigma_real(&m, &w).norm() < 1e-15);
    }
}

#[test]
fn product_kernel_of_a_pure_state() {
    let m = example();
    let w = vec![0.0, 0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
    let k = mesoflow::product_state_kernel(&m, &w).unwrap();
    // Σ = diag(1/2, 1/2, 0, 0) and Σ + iσ/2 is rank one
    let mut want = RMat::zeros(4, 4);
    want[(0, 0)] = 0.5;
    want[(1, 1)] = 0.5;
    assert!((&k.cov - want).norm() < 1e-15);
    assert!(k.validity().abs() < 1e-15);
}

#[test]
fn weyl_algebra_relations() {
    let s = SymplecticForm { sigma: RMat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]) };
    let a = WeylDescriptor::new(vec![1.0, 0.0]);
    let b = WeylDescriptor::new(vec![0.0, 2.0]);
    let ab = mesoflow::compose_weyl(&a, &b, &s);
    let ba = mesoflow::compose_weyl(&b, &a, &s);
    assert_eq!(ab.r, vec![1.0, 2.0]);
    assert_eq!(ab.phase, -1.0);
    assert_eq!(ba.phase, 1.0);
    let id = mesoflow::apply_gaussian_map(&ab, &RMat::identity(2, 2), &RMat::zeros(2, 2));
    assert_eq!(id, ab);
    let y = RMat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let x = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let img = mesoflow::apply_gaussian_map(&ab, &x, &y);
    assert_eq!(img.r, vec![2.0, 1.0]);
    assert!((img.prefactor() - (-3.0f64).exp()).abs() < 1e-15);
    let at = FlowPoint { t: 0.0, omega: vec![], x: RMat::identity(2, 2), y: RMat::zeros(2, 2), sigma: s.sigma.clone() };
    assert_eq!(mesoflow::map_product(&a, &b, &at), ab);
}

#[test]
fn flow_matches_fixed_step_oracle() {
    for (name, m, w0) in model_set(2, 31) {
        let t = 1.3;
        let flow = mesoflow::integrate_flow_at(&m, &w0, &[0.0, t], &tight()).unwrap();
        let p = flow.at(t).unwrap();
        let (w, x, y) = rk4_flow(&m, &w0, t, 4000);
        assert!(dist(&p.omega, &w) < 1e-10, "{name}");
        assert!((&p.x - x).norm() < 1e-9, "{name}");
        assert!((&p.y - y).norm() < 1e-9, "{name}");
        assert!((&p.y - p.y.transpose()).norm() < 1e-14);
    }
}

#[test]
fn x_is_the_jacobian_of_the_macroscopic_flow() {
    let mut r = rng(41);
    let m = random_model(&mut r, 2, 0.6);
    let w0 = random_state(&mut r, &m);
    let t = 0.9;
    let p = mesoflow::integrate_flow_at(&m, &w0, &[0.0, t], &tight()).unwrap().at(t).unwrap();
    let h = 1e-5;
    let n = m.n();
    // the identity component is fixed, so compare on the traceless block
    for j in 0..n - 1 {
        let mut wp = w0.clone();
        let mut wm = w0.clone();
        wp[j] += h;
        wm[j] -= h;
        let fp = macroflow::evolve_omega(&m, &wp, &[0.0, t], &tight()).unwrap();
        let fm = macroflow::evolve_omega(&m, &wm, &[0.0, t], &tight()).unwrap();
        for i in 0..n - 1 {
            let fd = (fp[1][i] - fm[1][i]) / (2.0 * h);
            assert!((fd - p.x[(i, j)]).abs() < 1e-6, "({i},{j}): {fd} vs {}", p.x[(i, j)]);
        }
    }
}

#[test]
fn sigma_is_transported_by_the_propagator() {
    for (name, m, w0) in model_set(2, 7) {
        let traj = macroflow::integrate_macro(&m, &w0, 2.0, &MacroOptions { ode: tight(), ..MacroOptions::default() }).unwrap();
        assert!(mesoflow::sigma_transport_defect(&m, &traj) < 1e-9, "{name}");
        let fd = mesoflow::sigma_derivative_defect(&m, &w0, &[0.5, 1.5], 1e-4, &tight()).unwrap();
        assert!(fd < 1e-6, "{name}: {fd}");
    }
}

#[test]
fn transport_at_time_zero_is_the_initial_kernel() {
    let mut r = rng(9);
    let m = random_model(&mut r, 3, 0.5);
    let w0 = random_state(&mut r, &m);
    let flow = mesoflow::integrate_flow_at(&m, &w0, &[0.0, 0.5], &tight()).unwrap();
    let k0 = mesoflow::product_state_kernel(&m, &w0).unwrap();
    let k = mesoflow::transport_covariance(&k0, &flow.point(0), 1e-10).unwrap();
    assert!((&k.cov - &k0.cov).norm() < 1e-15);
    let k1 = mesoflow::transport_covariance(&k0, &flow.point(1), 1e-10).unwrap();
    assert!(k1.validity() > -1e-10);

    let mut bad = flow.point(1);
    bad.y = RMat::identity(m.n(), m.n()).scale(-1.0);
    assert!(matches!(mesoflow::transport_covariance(&k0, &bad, 1e-10), Err(Error::CpViolation(_))));
}

#[test]
fn cocycle_and_certificate_hold() {
    for (name, m, w0) in model_set(2, 19) {
        let r: Vec<f64> = (0..m.n()).map(|k| 0.3 * k as f64 - 0.4).collect();
        let c = mesoflow::cocycle_defects(&m, &w0, 0.6, 0.9, &r, &tight()).unwrap();
        assert!(c.x < 1e-9 && c.y < 1e-9, "{name}: {c:?}");
        assert!(c.descriptor_r < 1e-9 && c.descriptor_log_prefactor < 1e-9, "{name}: {c:?}");
        let traj = macroflow::integrate_macro(&m, &w0, 1.5, &MacroOptions { ode: tight(), ..MacroOptions::default() }).unwrap();
        let cert = mesoflow::cp_certificate(&m, &traj, 1.5, &tight()).unwrap();
        assert!(cert.min_eig > -1e-10, "{name}: {cert:?}");
        assert!(cert.quadrature_discrepancy < 1e-8 && cert.y_quadrature_discrepancy < 1e-8, "{name}: {cert:?}");
        assert!(matches!(mesoflow::cp_certificate(&m, &traj, 2.0, &tight()), Err(Error::OutOfRange { .. })));
    }
}

#[test]
fn flow_q_agrees_with_real_assembly() {
    let mut r = rng(77);
    for d in [2, 3] {
        let m = random_model(&mut r, d, 1.0);
        let w = random_state(&mut r, &m);
        let q = mesoflow::flow_q(&m, &w).unwrap();
        let s = mesoflow::sigma_real(&m, &w);
        let qr = mesoflow::q_real(&m, &s, &macroflow::drift_real(&m, &w));
        assert!((q - qr).norm() < 1e-13);
    }
    let m = example();
    assert!(matches!(mesoflow::symplectic_form(&m, &[0.0; 3]), Err(Error::DimensionMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sigma_matches_commutator_oracle(seed in 0u64..10_000, d in 2usize..=4) {
        let mut r = rng(seed);
        let m = random_model(&mut r, d, 0.3);
        let w = random_state(&mut r, &m);
        let s = mesoflow::symplectic_form(&m, &w).unwrap().sigma;
        prop_assert!((&s - sigma_oracle(&m, &w)).norm() < 1e-13);
        prop_assert!((&s + s.transpose()).norm() < 1e-15);
    }

    #[test]
    fn product_kernels_are_valid(seed in 0u64..10_000, d in 2usize..=3) {
        let mut r = rng(seed);
        let m = random_model(&mut r, d, 0.3);
        let w = random_state(&mut r, &m);
        let k = mesoflow::product_state_kernel(&m, &w).unwrap();
        prop_assert!(k.validity() > -1e-13);
        prop_assert!(linalg::hermitian_min_eig(&linalg::to_complex(&k.cov)) > -1e-13);
    }
}
