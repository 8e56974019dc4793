#![allow(dead_code)]

use mfdyn::algebra::{Model, ModelSpec};
use mfdyn::linalg::CMat;
use mfdyn::refexample;
use mfdyn::tolerances::Tolerances;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let g = random_complex(rng, n, n);
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Random valid model: hermitian h, PSD C of full rank, real ε, all of order `scale`.
pub fn random_model_spec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> ModelSpec {
    let n = d * d;
    let eps: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    let h = random_hermitian(rng, n) * Complex64::new(scale, 0.0);
    let g = random_complex(rng, n, n);
    let c = &g * g.adjoint() * Complex64::new(scale / n as f64, 0.0);
    ModelSpec::new(d, &eps, h, c)
}

pub fn random_model(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Model {
    Model::new(random_model_spec(rng, d, scale), Tolerances::default()).unwrap()
}

/// ω of a random full-rank density matrix.
pub fn random_state(rng: &mut ChaCha8Rng, model: &Model) -> Vec<f64> {
    let d = model.d();
    let g = random_complex(rng, d, d);
    let mut rho = &g * g.adjoint();
    let tr = rho.trace();
    rho /= tr;
    model.basis.omega(&rho)
}

pub fn example() -> Model {
    Model::new(refexample::example_model(), Tolerances::default()).unwrap()
}

pub fn example_omega0() -> Vec<f64> {
    refexample::omega_to_basis(&[0.3, 0.0, 0.4])
}

/// The qubit example plus `count` random models each for d = 2 and d = 3, with initial states.
pub fn model_set(count: usize, seed: u64) -> Vec<(String, Model, Vec<f64>)> {
    let mut out = vec![("example".to_string(), example(), example_omega0())];
    let mut r = rng(seed);
    for d in [2, 3] {
        for k in 0..count {
            let m = random_model(&mut r, d, 0.5);
            let w = random_state(&mut r, &m);
            out.push((format!("d{d}-{k}"), m, w));
        }
    }
    out
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Model with a single jump operator (rank-one C) and random h, ε on the traceless block.
pub fn rank_one_model(rng: &mut ChaCha8Rng, d: usize) -> Model {
    let n = d * d;
    let mut g = random_complex(rng, n, 1);
    g[(n - 1, 0)] = Complex64::new(0.0, 0.0);
    let c = &g * g.adjoint();
    let mut h = random_hermitian(rng, n);
    for k in 0..n {
        h[(n - 1, k)] = Complex64::new(0.0, 0.0);
        h[(k, n - 1)] = Complex64::new(0.0, 0.0);
    }
    let eps: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Model::new(ModelSpec::new(d, &eps, h, c), Tolerances::default()).unwrap()
}
