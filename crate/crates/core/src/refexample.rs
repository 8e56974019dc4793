//! Qubit chain with Kossakowski matrix [[1,−i,0],[i,1,0],[0,0,0]] on the spin
//! operators s_μ = σ_μ/2, and its closed-form macroscopic solution.
//!
//! The spin basis {s_1, s_2, s_3, 1} is not orthonormal. With the Gell-Mann
//! basis v = λ·b (λ = √2 on spins, 1/√2 on the identity), couplings transform as
//! x^v_μν = x^b_μν/(λ_μ λ_ν) and averages as ω^v_μ = λ_μ ω^b_μ.

use num_complex::Complex64;

use crate::algebra::ModelSpec;
use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat, I, ONE, ZERO};

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn lambda() -> [f64; 4] {
    [SQRT2, SQRT2, SQRT2, 1.0 / SQRT2]
}

/// Kossakowski matrix on (s_1, s_2, s_3).
pub fn kossakowski_spin() -> CMat {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    CMat::from_row_slice(
        3,
        3,
        &[c(1., 0.), c(0., -1.), ZERO, c(0., 1.), c(1., 0.), ZERO, ZERO, ZERO, ZERO],
    )
}

/// Spin operators s_μ = σ_μ/2.
pub fn spin_ops() -> [CMat; 3] {
    let h = Complex64::new(0.5, 0.0);
    let hi = Complex64::new(0.0, 0.5);
    [
        CMat::from_row_slice(2, 2, &[ZERO, h, h, ZERO]),
        CMat::from_row_slice(2, 2, &[ZERO, -hi, hi, ZERO]),
        CMat::from_row_slice(2, 2, &[h, ZERO, ZERO, -h]),
    ]
}

/// Couplings given on {s_1, s_2, s_3, 1} mapped onto the orthonormal basis.
pub fn bridge_to_basis(eps_b: &[f64; 4], h_b: &CMat, c_b: &CMat) -> ModelSpec {
    let l = lambda();
    let eps: Vec<f64> = (0..4).map(|m| eps_b[m] / l[m]).collect();
    let h = CMat::from_fn(4, 4, |m, n| h_b[(m, n)] / (l[m] * l[n]));
    let c = CMat::from_fn(4, 4, |m, n| c_b[(m, n)] / (l[m] * l[n]));
    ModelSpec::new(2, &eps, h, c)
}

/// The example model in the orthonormal basis: h = 0, ε = 0, C^v = C/2 on the spin block.
pub fn example_model() -> ModelSpec {
    let mut c_b = CMat::zeros(4, 4);
    c_b.view_mut((0, 0), (3, 3)).copy_from(&kossakowski_spin());
    bridge_to_basis(&[0.0; 4], &CMat::zeros(4, 4), &c_b)
}

/// (ω_1, ω_2, ω_3) = Tr(ρ s_μ) ↦ Tr(ρ v_μ), including the identity component 1/√2.
pub fn omega_to_basis(w: &[f64; 3]) -> Vec<f64> {
    let l = lambda();
    vec![l[0] * w[0], l[1] * w[1], l[2] * w[2], l[3] * 1.0]
}

pub fn omega_from_basis(w: &[f64]) -> [f64; 3] {
    let l = lambda();
    [w[0] / l[0], w[1] / l[1], w[2] / l[2]]
}

/// Drift matrix on the spin averages.
pub fn drift_spin(w: &[f64; 3]) -> RMat {
    RMat::from_row_slice(3, 3, &[0., 0., w[0], 0., 0., w[1], -w[0], -w[1], 0.])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitExampleConfig {
    pub omega0: [f64; 3],
    pub xi: f64,
    pub xi12: f64,
    /// b with ω_3 = −ξ tanh(ξ b); None when ω_1 = ω_2 = 0
    pub b: Option<f64>,
}

impl QubitExampleConfig {
    pub fn new(omega0: [f64; 3]) -> Result<Self> {
        let xi = omega0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if xi.is_nan() || xi > 0.5 + 1e-12 {
            return Err(Error::InvalidState(format!("|ω_0| = {xi} exceeds 1/2")));
        }
        let xi12 = omega0[0].hypot(omega0[1]);
        let b = (xi12 > 0.0).then(|| (-omega0[2] / xi).atanh() / xi);
        Ok(Self { omega0, xi, xi12, b })
    }

    /// cosh(bξ)/cosh(ξ(t+b)), the common factor of ω_1 and ω_2.
    fn ratio(&self, t: f64) -> f64 {
        match self.b {
            Some(b) => {
                let x = self.xi;
                // cosh(bx)/cosh((t+b)x) written to avoid overflow for large |b|
                let (p, q) = (b * x, (t + b) * x);
                (p.abs() - q.abs()).exp() * (1.0 + (-2.0 * p.abs()).exp())
                    / (1.0 + (-2.0 * q.abs()).exp())
            }
            None => 1.0,
        }
    }
}

pub fn analytic_omega(cfg: &QubitExampleConfig, t: f64) -> Result<[f64; 3]> {
    if t < 0.0 {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: f64::INFINITY });
    }
    let Some(b) = cfg.b else {
        return Ok(cfg.omega0);
    };
    let x = cfg.xi;
    let r = cfg.ratio(t);
    Ok([r * cfg.omega0[0], r * cfg.omega0[1], -x * (x * (t + b)).tanh()])
}

/// α(t) = ∫_0^t cosh(bξ)/cosh(ξ(u+b)) du.
pub fn analytic_alpha(cfg: &QubitExampleConfig, t: f64) -> f64 {
    let x = cfg.xi;
    match cfg.b {
        Some(b) if x > 0.0 => {
            (2.0 / x) * (b * x).cosh() * ((x * (t + b)).exp().atan() - (x * b).exp().atan())
        }
        _ => t,
    }
}

/// M_t = exp(α(t) D(ω_0)) on the spin averages.
pub fn analytic_m(cfg: &QubitExampleConfig, t: f64) -> RMat {
    if cfg.xi12 == 0.0 {
        return RMat::identity(3, 3);
    }
    let d0 = drift_spin(&cfg.omega0);
    let a = analytic_alpha(cfg, t);
    let k = cfg.xi12;
    let d2 = &d0 * &d0;
    RMat::identity(3, 3) + d0 * ((a * k).sin() / k) + d2 * ((1.0 - (a * k).cos()) / (k * k))
}

/// exp(−iα(t)(ω_1 s_2 − ω_2 s_1)).
pub fn analytic_unitary(cfg: &QubitExampleConfig, t: f64) -> CMat {
    if cfg.xi12 == 0.0 {
        return CMat::identity(2, 2);
    }
    let s = spin_ops();
    let g = &s[1] * Complex64::new(cfg.omega0[0], 0.0) - &s[0] * Complex64::new(cfg.omega0[1], 0.0);
    let phi = analytic_alpha(cfg, t) * cfg.xi12 / 2.0;
    CMat::identity(2, 2) * Complex64::new(phi.cos(), 0.0)
        - g * (I * (2.0 * phi.sin() / cfg.xi12))
}

/// Effective single-site Hamiltonian ω_1 s_2 − ω_2 s_1 at spin averages `w`.
pub fn effective_hamiltonian_spin(w: &[f64; 3]) -> CMat {
    let s = spin_ops();
    &s[1] * (ONE * w[0]) - &s[0] * (ONE * w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_value_at_one() {
        let cfg = QubitExampleConfig::new([0.3, 0.0, 0.4]).unwrap();
        let b = cfg.b.unwrap();
        assert!((b - 2.0 * (-0.8f64).atanh()).abs() < 1e-14);
        assert!((b + 2.1972245773362196).abs() < 1e-12);
        let w = analytic_omega(&cfg, 1.0).unwrap();
        // −0.5·tanh(0.5·(1 + b)) via tanh addition, (0.8 − tanh ½)/(2(1 − 0.8 tanh ½))
        assert!((w[2] - 0.268_030_683_315_926_06).abs() < 1e-14, "{}", w[2]);
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 0.5).abs() < 1e-13);
    }

    #[test]
    fn ratio_matches_cosh_form() {
        let cfg = QubitExampleConfig::new([0.3, 0.0, 0.4]).unwrap();
        let b = cfg.b.unwrap();
        for t in [0.0, 0.5, 2.0, 7.0] {
            let direct = (b * cfg.xi).cosh() / (cfg.xi * (t + b)).cosh();
            assert!((cfg.ratio(t) - direct).abs() < 1e-14);
        }
    }
}
