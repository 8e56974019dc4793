mod common;

use mfdyn::algebra::{self, Model, ModelSpec};
use mfdyn::linalg::{self, CMat, ZERO};
use mfdyn::macroflow;
use mfdyn::tolerances::Tolerances;
use mfdyn::Error;
use num_complex::Complex64;
use proptest::prelude::*;

use common::*;

#[test]
fn basis_is_orthonormal_and_hermitian() {
    for d in 2..=5 {
        let b = algebra::build_basis(d).unwrap();
        assert_eq!(b.n(), d * d);
        let (herm, ortho) = algebra::basis_defects(&b);
        assert!(herm < 1e-15 && ortho < 1e-14, "d={d}: {herm} {ortho}");
        let id = &b.v[b.identity_index()];
        assert!(linalg::frob(&(id - CMat::identity(d, d).scale(1.0 / (d as f64).sqrt()))) < 1e-15);
        for v in &b.v[..b.identity_index()] {
            assert!(linalg::trace(v).norm() < 1e-15);
        }
    }
}

#[test]
fn expansion_reconstructs_operators() {
    let mut r = rng(1);
    for d in 2..=4 {
        let b = algebra::build_basis(d).unwrap();
        let a = random_complex(&mut r, d, d);
        let coeffs: Vec<Complex64> = b.v.iter().map(|v| linalg::trace_product(&a, v)).collect();
        assert!(linalg::frob(&(b.combine(&coeffs) - &a)) < 1e-14);
    }
}

#[test]
fn structure_tensor_is_imaginary_and_antisymmetric() {
    for d in 2..=4 {
        let b = algebra::build_basis(d).unwrap();
        let j = algebra::structure_tensor(&b);
        assert!(j.real_residue() < 1e-14);
        let n = b.n();
        for g in 0..n {
            for a in 0..n {
                for c in 0..n {
                    assert!((j.get(g, a, c) + j.get(g, c, a)).norm() < 1e-14);
                    // total antisymmetry under exchange with the lower index
                    assert!((j.get(g, a, c) + j.get(a, g, c)).norm() < 1e-14);
                }
                // identity is central
                assert!(j.get(g, a, n - 1).norm() < 1e-15);
                assert!(j.get(n - 1, g, a).norm() < 1e-15);
            }
        }
    }
}

#[test]
fn qubit_structure_constants_are_sqrt2_levi_civita() {
    let b = algebra::build_basis(2).unwrap();
    let j = algebra::structure_tensor(&b);
    // v_1, v_2, v_3 = σ_x, σ_y, σ_z over √2 gives [v_a, v_b] = i√2 ε_abc v_c
    let eps = |a: usize, b: usize, c: usize| -> f64 {
        match (a, b, c) {
            (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
            (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
            _ => 0.0,
        }
    };
    for g in 0..3 {
        for a in 0..3 {
            for c in 0..3 {
                assert!((j.im(g, a, c) - 2f64.sqrt() * eps(a, c, g)).abs() < 1e-15);
            }
        }
    }
}

fn spec_with(d: usize, h: CMat, c: CMat) -> ModelSpec {
    ModelSpec::new(d, &vec![0.0; d * d], h, c)
}

#[test]
fn validation_rejects_bad_couplings() {
    let tol = Tolerances::default();
    let n = 4;
    let mut c = CMat::zeros(n, n);
    c[(0, 0)] = Complex64::new(1.0, 0.0);
    c[(1, 1)] = Complex64::new(-0.5, 0.0);
    let rep = algebra::validate_model(&spec_with(2, CMat::zeros(n, n), c.clone()), &tol);
    assert!(!rep.passed);
    assert!((rep.c_min_eig + 0.5).abs() < 1e-14);
    assert!(matches!(Model::new(spec_with(2, CMat::zeros(n, n), c), tol), Err(Error::InvalidModel(_))));

    let mut h = CMat::zeros(n, n);
    h[(0, 1)] = Complex64::new(1.0, 0.0);
    let rep = algebra::validate_model(&spec_with(2, h, CMat::zeros(n, n)), &tol);
    assert!(!rep.passed && rep.h_hermiticity_defect > 0.5);

    let rep = algebra::validate_model(&spec_with(2, CMat::zeros(3, 3), CMat::zeros(3, 3)), &tol);
    assert!(!rep.dimension_ok);
    assert!(matches!(algebra::build_basis(1), Err(Error::InvalidDimension(1))));
}

#[test]
fn example_couplings_split_into_a_and_b() {
    let m = example();
    // C^v = C/2 on the spin block: A = diag(1,1,0)/2, B = [[0,-i],[i,0]]/2
    let c = &m.coeffs;
    assert!((c.a_re[(0, 0)] - 0.5).abs() < 1e-15 && (c.a_re[(1, 1)] - 0.5).abs() < 1e-15);
    assert!((c.b[(0, 1)] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
    assert!((c.b[(1, 0)] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    assert!(c.a[(2, 2)] == ZERO && c.b[(2, 2)] == ZERO);
}

#[test]
fn drift_of_example_matches_spin_form() {
    let m = example();
    for w in [[0.3, 0.0, 0.4], [-0.1, 0.2, 0.05], [0.0, 0.0, 0.5]] {
        let wv = mfdyn::refexample::omega_to_basis(&w);
        let d = macroflow::drift_matrix(&m, &wv).unwrap();
        let spin = mfdyn::refexample::drift_spin(&w);
        // λ = √2 on every spin component, so D^v = D^s on the spin block after ω^v = √2 ω^s
        for a in 0..3 {
            for b in 0..3 {
                assert!((d[(a, b)] - spin[(a, b)]).abs() < 1e-15);
            }
            assert!(d[(a, 3)].abs() < 1e-15 && d[(3, a)].abs() < 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn derived_coefficients_have_expected_symmetry(seed in 0u64..10_000, d in 2usize..=3) {
        let mut r = rng(seed);
        let m = random_model(&mut r, d, 1.0);
        let c = &m.coeffs;
        prop_assert!(linalg::max_abs_im(&c.a) < 1e-14);
        prop_assert!((&c.a_re - c.a_re.transpose()).norm() < 1e-14);
        prop_assert!(linalg::max_abs_re(&c.b) < 1e-14);
        prop_assert!(linalg::hermiticity_defect(&c.b) < 1e-14);
        prop_assert!((&c.b_im + c.b_im.transpose()).norm() < 1e-14);
        prop_assert!((&c.atilde + c.atilde.transpose() - c.a_re.scale(2.0)).norm() < 1e-13);
        let w = random_state(&mut r, &m);
        let dm = macroflow::drift_matrix(&m, &w).unwrap();
        prop_assert!((&dm + dm.transpose()).norm() < 1e-12);
        let dr = macroflow::drift_real(&m, &w);
        prop_assert!((dm - dr).norm() < 1e-12);
    }

    #[test]
    fn omega_round_trips_through_rho(seed in 0u64..10_000, d in 2usize..=4) {
        let mut r = rng(seed);
        let m = random_model(&mut r, d, 0.3);
        let w = random_state(&mut r, &m);
        let back = m.basis.omega(&m.basis.rho(&w));
        prop_assert!(dist(&w, &back) < 1e-14);
        prop_assert!((w[m.basis.identity_index()] - 1.0 / (d as f64).sqrt()).abs() < 1e-14);
        prop_assert!(m.check_state(&w).is_ok());
    }
}
