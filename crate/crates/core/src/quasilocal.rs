//! Emergent time-dependent Hamiltonian on a finite support, its propagator and
//! the generator of the limiting automorphisms.

use num_complex::Complex64;

use crate::algebra::Model;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, I};
use crate::macroflow::{self, MacroTrajectory};
use crate::ode::{self, OdeOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    pub s: usize,
    pub m: CMat,
}

impl LocalOperator {
    pub fn new(d: usize, s: usize, m: CMat) -> Result<Self> {
        let dim = d.pow(s as u32);
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: m.nrows() });
        }
        Ok(Self { s, m })
    }

    /// A single-site operator placed at site k of a support of length s.
    pub fn at_site(op: &CMat, k: usize, s: usize) -> Self {
        Self { s, m: linalg::embed(op, k, s) }
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub s: usize,
    pub t: f64,
    /// c_μ = Σ_ν(−iB_μν + 2h^(re)_μν)ω_ν + ε_μ
    pub c: Vec<f64>,
    pub matrix: CMat,
}

fn check_capacity(model: &Model, s: usize) -> Result<usize> {
    if s == 0 {
        return Err(Error::InvalidState("support length must be at least 1".into()));
    }
    let cap = model.tol.quasilocal_cap;
    let dim = (model.d() as u128).checked_pow(s as u32).unwrap_or(u128::MAX);
    if dim > cap as u128 {
        return Err(Error::Capacity { dim: dim.min(usize::MAX as u128) as usize, cap });
    }
    Ok(dim as usize)
}

fn check_time(traj: &MacroTrajectory, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= traj.t_end()) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: traj.t_end() });
    }
    Ok(())
}

/// c(ω) with the realness of −iB checked.
pub fn effective_coefficients(model: &Model, omega: &[f64]) -> Result<Vec<f64>> {
    let c = &model.coeffs;
    let n = model.n();
    let m = c.b.map(|z| -I * z) + linalg::to_complex(&c.hre).scale(2.0);
    let w = nalgebra::DVector::from_iterator(n, omega.iter().map(|&x| Complex64::new(x, 0.0)));
    let v = m * w;
    let residue = v.iter().fold(0.0, |a: f64, z| a.max(z.im.abs()));
    if residue > model.tol.alg * (1.0 + v.norm()) {
        return Err(Error::Consistency { what: "effective Hamiltonian coefficients", residue });
    }
    Ok(v.iter().zip(&c.eps).map(|(z, e)| z.re + e).collect())
}

/// −iB = Im B, so c = (Im B + 2h^(re))ω + ε in real arithmetic.
pub fn coefficients_real(model: &Model, omega: &[f64]) -> Vec<f64> {
    let c = &model.coeffs;
    let n = model.n();
    (0..n)
        .map(|mu| {
            (0..n)
                .map(|nu| (c.b_im[(mu, nu)] + 2.0 * c.hre[(mu, nu)]) * omega[nu])
                .sum::<f64>()
                + c.eps[mu]
        })
        .collect()
}

/// Σ_μ B_μν ω_ν, written as Im-B contraction: (B ω)_μ = i (Im B ω)_μ.
pub fn dissipative_coefficients(model: &Model, omega: &[f64]) -> Vec<f64> {
    let c = &model.coeffs;
    let n = model.n();
    (0..n)
        .map(|mu| (0..n).map(|nu| c.b_im[(mu, nu)] * omega[nu]).sum())
        .collect()
}

pub fn effective_hamiltonian(
    model: &Model,
    traj: &MacroTrajectory,
    s: usize,
    t: f64,
) -> Result<EffectiveHamiltonian> {
    check_capacity(model, s)?;
    check_time(traj, t)?;
    let w = traj.omega_at(t)?;
    let c = effective_coefficients(model, &w)?;
    let h1 = model.site_operator(&c);
    let mut matrix = CMat::zeros(model.d().pow(s as u32), model.d().pow(s as u32));
    for k in 0..s {
        matrix += linalg::embed(&h1, k, s);
    }
    let herm = linalg::hermiticity_defect(&matrix);
    if herm > model.tol.alg * (1.0 + linalg::frob(&matrix)) {
        return Err(Error::Consistency { what: "effective Hamiltonian hermiticity", residue: herm });
    }
    Ok(EffectiveHamiltonian { s, t, c, matrix })
}

/// Single-site propagators u_t with u' = −i h(ω_t) u, integrated jointly with ω.
#[derive(Debug, Clone)]
pub struct UnitaryFlow {
    pub times: Vec<f64>,
    pub omegas: Vec<Vec<f64>>,
    pub single: Vec<CMat>,
}

pub fn single_site_flow(
    model: &Model,
    omega0: &[f64],
    times: &[f64],
    ode_opts: &OdeOptions,
) -> Result<UnitaryFlow> {
    let n = model.n();
    let d = model.d();
    let mut y0 = omega0.to_vec();
    y0.resize(n + 2 * d * d, 0.0);
    linalg::pack_complex(&CMat::identity(d, d), &mut y0[n..]);
    let sol = ode::integrate(
        |_, y, dy| {
            let w = &y[..n];
            let dm = macroflow::drift_real(model, w);
            let wv = nalgebra::DVector::from_column_slice(w);
            dy[..n].copy_from_slice((&dm * wv).as_slice());
            let h = model.site_operator(&coefficients_real(model, w));
            let u = linalg::unpack_complex(&y[n..], d, d);
            linalg::pack_complex(&((h * u) * (-I)), &mut dy[n..]);
        },
        0.0,
        &y0,
        times,
        ode_opts,
    )?;
    Ok(UnitaryFlow {
        times: sol.times,
        omegas: sol.states.iter().map(|y| y[..n].to_vec()).collect(),
        single: sol
            .states
            .iter()
            .map(|y| linalg::unpack_complex(&y[n..], d, d))
            .collect(),
    })
}

fn single_site_at(model: &Model, omega0: &[f64], t: f64, ode_opts: &OdeOptions) -> Result<CMat> {
    let flow = single_site_flow(model, omega0, &[0.0, t], ode_opts)?;
    Ok(flow.single[1].clone())
}

/// U_t^(S) = 𝕋exp(−i∫H_s ds). H_t is a sum of single-site terms, so U = u_t^{⊗S}.
pub fn evolve_unitary(
    model: &Model,
    traj: &MacroTrajectory,
    s: usize,
    t: f64,
    ode_opts: &OdeOptions,
) -> Result<CMat> {
    check_capacity(model, s)?;
    check_time(traj, t)?;
    let u = single_site_at(model, traj.omega0(), t, ode_opts)?;
    Ok(linalg::tensor_power(&u, s))
}

/// Same propagator from the full d^S-dimensional equation, for cross-checks.
pub fn evolve_unitary_direct(
    model: &Model,
    traj: &MacroTrajectory,
    s: usize,
    t: f64,
    ode_opts: &OdeOptions,
) -> Result<CMat> {
    let dim = check_capacity(model, s)?;
    check_time(traj, t)?;
    let n = model.n();
    let mut y0 = traj.omega0().to_vec();
    y0.resize(n + 2 * dim * dim, 0.0);
    linalg::pack_complex(&CMat::identity(dim, dim), &mut y0[n..]);
    let sol = ode::integrate(
        |_, y, dy| {
            let w = &y[..n];
            let dm = macroflow::drift_real(model, w);
            let wv = nalgebra::DVector::from_column_slice(w);
            dy[..n].copy_from_slice((&dm * wv).as_slice());
            let h1 = model.site_operator(&coefficients_real(model, w));
            let mut h = CMat::zeros(dim, dim);
            for k in 0..s {
                h += linalg::embed(&h1, k, s);
            }
            let u = linalg::unpack_complex(&y[n..], dim, dim);
            linalg::pack_complex(&((h * u) * (-I)), &mut dy[n..]);
        },
        0.0,
        &y0,
        &[0.0, t],
        ode_opts,
    )?;
    Ok(linalg::unpack_complex(&sol.states[1][n..], dim, dim))
}

/// α_t[O] = U† O U.
pub fn heisenberg_evolve(o: &LocalOperator, u: &CMat) -> Result<LocalOperator> {
    if u.nrows() != o.m.nrows() {
        return Err(Error::DimensionMismatch { expected: o.m.nrows(), got: u.nrows() });
    }
    Ok(LocalOperator { s: o.s, m: u.adjoint() * &o.m * u })
}

/// β_{t,τ}[O] = U_t† U_τ O U_τ† U_t, so that α_t = β_{t,τ} ∘ α_τ.
pub fn intertwiner(u_t: &CMat, u_tau: &CMat, o: &LocalOperator) -> Result<LocalOperator> {
    if u_t.nrows() != o.m.nrows() || u_tau.nrows() != o.m.nrows() {
        return Err(Error::DimensionMismatch { expected: o.m.nrows(), got: u_t.nrows() });
    }
    let w = u_tau.adjoint() * u_t;
    Ok(LocalOperator { s: o.s, m: w.adjoint() * &o.m * w })
}

/// Generator at running time t for dynamics started at t0 from the state reached at t0.
///
/// Full action X ↦ i[G, X] with G = Σ_μ c_μ(τ) A_μ, A_μ = Σ_k α_τ[v_μ^(k)], τ = t − t0.
/// The part inherited from the dissipator alone is X ↦ Σ_μν B_μν ω_ν(τ) [A_μ, X] = i[G_B, X].
#[derive(Debug, Clone)]
pub struct NonMarkovGenerator {
    pub s: usize,
    pub t: f64,
    pub t0: f64,
    pub omega_start: Vec<f64>,
    pub omega_tau: Vec<f64>,
    pub c_full: Vec<f64>,
    /// Im(Bω); the dissipative coefficients are i times these
    pub c_dissipative: Vec<f64>,
    pub evolved: Vec<CMat>,
}

impl NonMarkovGenerator {
    fn combine(&self, c: &[f64]) -> CMat {
        let dim = self.evolved[0].nrows();
        let mut g = CMat::zeros(dim, dim);
        for (cm, a) in c.iter().zip(&self.evolved) {
            if *cm != 0.0 {
                g += a.scale(*cm);
            }
        }
        g
    }

    pub fn hamiltonian(&self) -> CMat {
        self.combine(&self.c_full)
    }

    pub fn dissipative_hamiltonian(&self) -> CMat {
        self.combine(&self.c_dissipative)
    }

    pub fn apply(&self, o: &CMat) -> CMat {
        linalg::commutator(&self.hamiltonian(), o) * I
    }

    pub fn apply_dissipative(&self, o: &CMat) -> CMat {
        linalg::commutator(&self.dissipative_hamiltonian(), o) * I
    }

    /// Operator norm of the difference of the full generators, ‖ad_{G1−G2}‖ = λ_max − λ_min.
    pub fn norm_difference(&self, other: &Self) -> f64 {
        spread(&(self.hamiltonian() - other.hamiltonian()))
    }

    pub fn dissipative_norm_difference(&self, other: &Self) -> f64 {
        spread(&(self.dissipative_hamiltonian() - other.dissipative_hamiltonian()))
    }
}

fn spread(g: &CMat) -> f64 {
    let ev = linalg::hermitian_eigenvalues(g);
    ev[ev.len() - 1] - ev[0]
}

fn generator_from(model: &Model, omega_start: &[f64], s: usize, tau: f64, ode_opts: &OdeOptions) -> Result<(Vec<f64>, Vec<CMat>)> {
    let flow = single_site_flow(model, omega_start, &[0.0, tau], ode_opts)?;
    let u = &flow.single[1];
    let evolved = model
        .basis
        .v
        .iter()
        .map(|v| {
            let a1 = u.adjoint() * v * u;
            let mut a = CMat::zeros(model.d().pow(s as u32), model.d().pow(s as u32));
            for k in 0..s {
                a += linalg::embed(&a1, k, s);
            }
            a
        })
        .collect();
    Ok((flow.omegas[1].clone(), evolved))
}

pub fn nonmarkov_generator(
    model: &Model,
    traj: &MacroTrajectory,
    s: usize,
    t: f64,
    t0: f64,
    ode_opts: &OdeOptions,
) -> Result<NonMarkovGenerator> {
    check_capacity(model, s)?;
    check_time(traj, t)?;
    if !(t0 >= 0.0 && t0 <= t) {
        return Err(Error::OutOfRange { t: t0, lo: 0.0, hi: t });
    }
    let omega_start = traj.omega_at(t0)?;
    let (omega_tau, evolved) = generator_from(model, &omega_start, s, t - t0, ode_opts)?;
    Ok(NonMarkovGenerator {
        s,
        t,
        t0,
        c_full: coefficients_real(model, &omega_tau),
        c_dissipative: dissipative_coefficients(model, &omega_tau),
        omega_start,
        omega_tau,
        evolved,
    })
}

/// ‖(d/dt)α_{t−t0}[O] − 𝒦[α_{t−t0}[O]]‖_F with central differences of step h.
pub fn generator_fd_defect(
    model: &Model,
    traj: &MacroTrajectory,
    o: &LocalOperator,
    t: f64,
    t0: f64,
    h: f64,
    ode_opts: &OdeOptions,
) -> Result<f64> {
    let gen = nonmarkov_generator(model, traj, o.s, t, t0, ode_opts)?;
    let tau = t - t0;
    let times: Vec<f64> = if tau >= h {
        vec![0.0, tau - h, tau, tau + h]
    } else {
        vec![0.0, tau, tau + h, tau + 2.0 * h]
    };
    let flow = single_site_flow(model, &gen.omega_start, &times, ode_opts)?;
    let conj = |u: &CMat| {
        let us = linalg::tensor_power(u, o.s);
        us.adjoint() * &o.m * us
    };
    let a: Vec<CMat> = flow.single[1..].iter().map(conj).collect();
    let (deriv, at_tau) = if tau >= h {
        ((&a[2] - &a[0]) / Complex64::new(2.0 * h, 0.0), &a[1])
    } else {
        ((&a[1] * Complex64::new(4.0, 0.0) - &a[0] * Complex64::new(3.0, 0.0) - &a[2]) / Complex64::new(2.0 * h, 0.0), &a[0])
    };
    Ok(linalg::frob(&(deriv - gen.apply(at_tau))))
}
