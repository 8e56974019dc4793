use serde::{Deserialize, Serialize};

use crate::ode::OdeOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// algebraic identities
    pub alg: f64,
    /// positive semi-definiteness
    pub psd: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    /// finite-difference generator checks
    pub fd: f64,
    /// relative to the largest singular value of σ
    pub rank: f64,
    /// capacity for quasi-local supports, d^S
    pub quasilocal_cap: usize,
    /// capacity for the finite-N oracle, d^N
    pub oracle_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            alg: 1e-12,
            psd: 1e-10,
            ode_rtol: 1e-10,
            ode_atol: 1e-12,
            fd: 1e-6,
            rank: 1e-9,
            quasilocal_cap: 4096,
            oracle_cap: 256,
        }
    }
}

impl Tolerances {
    pub fn ode(&self) -> OdeOptions {
        OdeOptions {
            rtol: self.ode_rtol,
            atol: self.ode_atol,
            ..OdeOptions::default()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let vals = [
            ("alg", self.alg),
            ("psd", self.psd),
            ("ode_rtol", self.ode_rtol),
            ("ode_atol", self.ode_atol),
            ("fd", self.fd),
            ("rank", self.rank),
        ];
        for (name, v) in vals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}
