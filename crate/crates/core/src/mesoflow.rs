//! Time-dependent symplectic form, Gaussian fluctuation maps (X_t, Y_t),
//! covariance transport and the complete-positivity certificate.

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::Model;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, I};
use crate::macroflow::{self, MacroTrajectory};
use crate::ode::{self, OdeOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    pub sigma: RMat,
}

/// σ_μν(ω) = −i Σ_α J^α_μν ω_α.
pub fn symplectic_form(model: &Model, omega: &[f64]) -> Result<SymplecticForm> {
    let n = model.n();
    if omega.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: omega.len() });
    }
    let w: Vec<Complex64> = omega.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let s = model.j.contract(&w) * (-I);
    let residue = linalg::max_abs_im(&s);
    if residue > model.tol.alg * (1.0 + linalg::frob(&s)) {
        return Err(Error::Consistency { what: "symplectic form", residue });
    }
    Ok(SymplecticForm { sigma: linalg::re(&s) })
}

/// σ(ω) = Σ_α ω_α Im J^α in real arithmetic.
pub fn sigma_real(model: &Model, omega: &[f64]) -> RMat {
    model.j.contract_im(omega)
}

/// Q(ω) = −iσ(ω)B̃ + D(ω), checked for realness.
pub fn flow_q(model: &Model, omega: &[f64]) -> Result<RMat> {
    let sigma = symplectic_form(model, omega)?.sigma;
    let d = macroflow::drift_matrix(model, omega)?;
    let q = linalg::to_complex(&sigma) * &model.coeffs.btilde * (-I) + linalg::to_complex(&d);
    let residue = linalg::max_abs_im(&q);
    if residue > model.tol.alg * (1.0 + linalg::frob(&q)) {
        return Err(Error::Consistency { what: "fluctuation generator Q", residue });
    }
    Ok(linalg::re(&q))
}

/// −iσB̃ = σ Im B̃ with B̃ = i Im B̃.
pub fn q_real(model: &Model, sigma: &RMat, d: &RMat) -> RMat {
    sigma * &model.coeffs.btilde_im + d
}

#[derive(Debug, Clone)]
pub struct FlowPoint {
    pub t: f64,
    pub omega: Vec<f64>,
    pub x: RMat,
    pub y: RMat,
    pub sigma: RMat,
}

#[derive(Debug, Clone)]
pub struct FluctuationFlow {
    pub times: Vec<f64>,
    pub omegas: Vec<Vec<f64>>,
    pub x: Vec<RMat>,
    pub y: Vec<RMat>,
    pub sigma: Vec<RMat>,
}

impl FluctuationFlow {
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .binary_search_by(|x| x.total_cmp(&t))
            .map_err(|_| Error::OutOfRange { t, lo: 0.0, hi: *self.times.last().unwrap_or(&0.0) })
    }

    pub fn point(&self, i: usize) -> FlowPoint {
        FlowPoint {
            t: self.times[i],
            omega: self.omegas[i].clone(),
            x: self.x[i].clone(),
            y: self.y[i].clone(),
            sigma: self.sigma[i].clone(),
        }
    }

    pub fn at(&self, t: f64) -> Result<FlowPoint> {
        Ok(self.point(self.index_of(t)?))
    }
}

fn flow_rhs(model: &Model, n: usize, y: &[f64], dy: &mut [f64]) {
    let w = &y[..n];
    let sigma = sigma_real(model, w);
    let d = macroflow::drift_real(model, w);
    let q = q_real(model, &sigma, &d);
    let wv = nalgebra::DVector::from_column_slice(w);
    dy[..n].copy_from_slice((&d * wv).as_slice());
    let nn = n * n;
    let x = linalg::unpack_real(&y[n..n + nn], n, n);
    let yy = linalg::unpack_real(&y[n + nn..n + 2 * nn], n, n);
    linalg::pack_real(&(&q * x), &mut dy[n..n + nn]);
    let src = &sigma * &model.coeffs.a_re * sigma.transpose();
    let dyy = src + &q * &yy + &yy * q.transpose();
    linalg::pack_real(&dyy, &mut dy[n + nn..n + 2 * nn]);
}

/// Flow based at ω_0 reported at the given increasing times (starting at 0).
pub fn integrate_flow_at(
    model: &Model,
    omega0: &[f64],
    times: &[f64],
    ode_opts: &OdeOptions,
) -> Result<FluctuationFlow> {
    let n = model.n();
    let nn = n * n;
    let mut y0 = omega0.to_vec();
    y0.extend_from_slice(RMat::identity(n, n).as_slice());
    y0.resize(n + 2 * nn, 0.0);
    let sol = ode::integrate(|_, y, dy| flow_rhs(model, n, y, dy), 0.0, &y0, times, ode_opts)?;
    let mut flow = FluctuationFlow {
        times: sol.times.clone(),
        omegas: Vec::with_capacity(times.len()),
        x: Vec::with_capacity(times.len()),
        y: Vec::with_capacity(times.len()),
        sigma: Vec::with_capacity(times.len()),
    };
    for s in &sol.states {
        let w = s[..n].to_vec();
        flow.sigma.push(sigma_real(model, &w));
        flow.omegas.push(w);
        flow.x.push(linalg::unpack_real(&s[n..n + nn], n, n));
        let y = linalg::unpack_real(&s[n + nn..], n, n);
        flow.y.push((&y + y.transpose()).scale(0.5));
    }
    Ok(flow)
}

/// Flow along the trajectory's grid.
pub fn integrate_flow(model: &Model, traj: &MacroTrajectory, ode_opts: &OdeOptions) -> Result<FluctuationFlow> {
    integrate_flow_at(model, traj.omega0(), &traj.times, ode_opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylDescriptor {
    pub r: Vec<f64>,
    pub log_prefactor: f64,
    pub phase: f64,
}

impl WeylDescriptor {
    pub fn new(r: Vec<f64>) -> Self {
        Self { r, log_prefactor: 0.0, phase: 0.0 }
    }

    pub fn prefactor(&self) -> f64 {
        self.log_prefactor.exp()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &RMat, v: &[f64]) -> Vec<f64> {
    (m * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
}

/// Φ_t[W(r)] = exp(−½ r·Y_t r) W(X_t^tr r).
pub fn apply_gaussian_map(w: &WeylDescriptor, x: &RMat, y: &RMat) -> WeylDescriptor {
    let yr = mat_vec(y, &w.r);
    WeylDescriptor {
        r: mat_vec(&x.transpose(), &w.r),
        log_prefactor: w.log_prefactor - 0.5 * dot(&w.r, &yr),
        phase: w.phase,
    }
}

/// W(r1)W(r2) = exp(−(i/2) r1·σr2) W(r1 + r2).
pub fn compose_weyl(w1: &WeylDescriptor, w2: &WeylDescriptor, sigma: &SymplecticForm) -> WeylDescriptor {
    let sr2 = mat_vec(&sigma.sigma, &w2.r);
    WeylDescriptor {
        r: w1.r.iter().zip(&w2.r).map(|(a, b)| a + b).collect(),
        log_prefactor: w1.log_prefactor + w2.log_prefactor,
        phase: w1.phase + w2.phase - 0.5 * dot(&w1.r, &sr2),
    }
}

/// Image of the product W(r1)W(r2) under the extended map at time t: the exchange phase,
/// a function of ω through σ(ω), is carried to σ(ω_t) while X_t, Y_t act on r1 + r2.
pub fn map_product(w1: &WeylDescriptor, w2: &WeylDescriptor, at: &FlowPoint) -> WeylDescriptor {
    let prod = compose_weyl(w1, w2, &SymplecticForm { sigma: at.sigma.clone() });
    apply_gaussian_map(&prod, &at.x, &at.y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub cov: RMat,
    pub sigma: SymplecticForm,
}

impl GaussianKernel {
    /// Min eigenvalue of Σ + (i/2)σ.
    pub fn validity(&self) -> f64 {
        let m = linalg::to_complex(&self.cov) + linalg::to_complex(&self.sigma.sigma) * (I * 0.5);
        linalg::hermitian_min_eig(&m)
    }
}

/// Σ_μν = Re Tr(ρ v_μ v_ν) − ω_μ ω_ν for the product state ρ(ω)^{⊗N}.
pub fn product_state_kernel(model: &Model, omega: &[f64]) -> Result<GaussianKernel> {
    let n = model.n();
    let rho = model.basis.rho(omega);
    let v = &model.basis.v;
    let cov = RMat::from_fn(n, n, |a, b| {
        linalg::trace_product(&rho, &(&v[a] * &v[b])).re - omega[a] * omega[b]
    });
    Ok(GaussianKernel { cov, sigma: symplectic_form(model, omega)? })
}

/// Σ_t = Y_t + X_t Σ_0 X_t^tr paired with σ(ω_t).
pub fn transport_covariance(k0: &GaussianKernel, at: &FlowPoint, tol_psd: f64) -> Result<GaussianKernel> {
    let cov = &at.y + &at.x * &k0.cov * at.x.transpose();
    let k = GaussianKernel { cov: (&cov + cov.transpose()).scale(0.5), sigma: SymplecticForm { sigma: at.sigma.clone() } };
    let m = k.validity();
    if m < -tol_psd {
        return Err(Error::CpViolation(m));
    }
    Ok(k)
}

/// Y_t + (i/2)(σ(ω_t) − X_t σ(ω_0) X_t^tr).
pub fn certificate_matrix(at: &FlowPoint, sigma0: &RMat) -> CMat {
    let corr = &at.sigma - &at.x * sigma0 * at.x.transpose();
    linalg::to_complex(&at.y) + linalg::to_complex(&corr) * (I * 0.5)
}

#[derive(Debug, Clone, Serialize)]
pub struct CpCertificate {
    pub t: f64,
    pub min_eig: f64,
    pub quadrature_discrepancy: f64,
    pub y_quadrature_discrepancy: f64,
}

/// Panel layout of the composite Gauss–Legendre rule on [0, t].
fn quadrature_nodes(t: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = linalg::gauss_legendre(order);
    let h = t / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(a + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// ∫_0^t X_{t,s} σ_s K σ_s^tr X_{t,s}^tr ds for K = A (real part of the result is Y_t)
/// and K = C = A + B, with X_{t,s} = X_t X_s^{-1}.
pub struct QuadratureResult {
    pub y: RMat,
    pub c_integral: CMat,
    pub flow_end: FlowPoint,
    pub sigma0: RMat,
}

pub fn quadrature(model: &Model, omega0: &[f64], t: f64, panels: usize, ode_opts: &OdeOptions) -> Result<QuadratureResult> {
    let n = model.n();
    let (nodes, weights) = quadrature_nodes(t, panels, 8);
    let grid = macroflow::merge_times(nodes.clone(), &[0.0, t]);
    let flow = integrate_flow_at(model, omega0, &grid, ode_opts)?;
    let end = flow.at(t)?;
    let c = &model.coeffs.a + &model.coeffs.b;
    let mut y = RMat::zeros(n, n);
    let mut ci = CMat::zeros(n, n);
    for (s, wgt) in nodes.iter().zip(&weights) {
        let p = flow.at(*s)?;
        let xs_inv = p.x.clone().try_inverse().ok_or(Error::FlowIntegration(f64::INFINITY))?;
        let xts = &end.x * xs_inv;
        let st = p.sigma.transpose();
        y += (&xts * &p.sigma * &model.coeffs.a_re * &st * xts.transpose()).scale(*wgt);
        let xc = linalg::to_complex(&xts);
        ci += (&xc * linalg::to_complex(&p.sigma) * &c * linalg::to_complex(&st) * xc.transpose()) * Complex64::new(*wgt, 0.0);
    }
    Ok(QuadratureResult { y, c_integral: ci, flow_end: end, sigma0: flow.sigma[0].clone() })
}

/// Minimum eigenvalue of the certificate matrix at t, cross-checked against quadrature.
pub fn cp_certificate(model: &Model, traj: &MacroTrajectory, t: f64, ode_opts: &OdeOptions) -> Result<CpCertificate> {
    if !(t >= 0.0 && t <= traj.t_end()) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: traj.t_end() });
    }
    if t == 0.0 {
        return Ok(CpCertificate { t, min_eig: 0.0, quadrature_discrepancy: 0.0, y_quadrature_discrepancy: 0.0 });
    }
    let panels = ((t / 0.05).ceil() as usize).max(4);
    let q = quadrature(model, traj.omega0(), t, panels, ode_opts)?;
    let m = certificate_matrix(&q.flow_end, &q.sigma0);
    let disc = linalg::frob(&(&m - &q.c_integral));
    let ydisc = (&q.flow_end.y - &q.y).norm();
    if disc > 1e-6 {
        return Err(Error::FlowIntegration(disc));
    }
    Ok(CpCertificate {
        t,
        min_eig: linalg::hermitian_min_eig(&m),
        quadrature_discrepancy: disc,
        y_quadrature_discrepancy: ydisc,
    })
}

/// Min eigenvalue of the certificate matrix at every grid point.
pub fn certificate_along(flow: &FluctuationFlow) -> Vec<f64> {
    let sigma0 = &flow.sigma[0];
    (0..flow.times.len())
        .map(|i| linalg::hermitian_min_eig(&certificate_matrix(&flow.point(i), sigma0)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CocycleDefects {
    pub x: f64,
    pub y: f64,
    pub descriptor_r: f64,
    pub descriptor_log_prefactor: f64,
}

/// Composition checks X_{t+s}(ω) = X_t(ω_s)X_s(ω), Y_t(ω_s) = Y_{t+s}(ω) − X_t(ω_s)Y_s(ω)X_t(ω_s)^tr
/// and the descriptor semigroup Φ_s^{ω}∘Φ_t^{ω_s} = Φ_{t+s}^{ω} on a test vector r.
pub fn cocycle_defects(model: &Model, omega0: &[f64], s: f64, t: f64, r: &[f64], ode_opts: &OdeOptions) -> Result<CocycleDefects> {
    let base = integrate_flow_at(model, omega0, &macroflow::merge_times(vec![0.0, s, s + t], &[]), ode_opts)?;
    let ps = base.at(s)?;
    let pst = base.at(s + t)?;
    let shifted = integrate_flow_at(model, &ps.omega, &macroflow::merge_times(vec![0.0, t], &[]), ode_opts)?;
    let qt = shifted.at(t)?;
    let x_def = (&pst.x - &qt.x * &ps.x).norm();
    let y_pred = &pst.y - &qt.x * &ps.y * qt.x.transpose();
    let y_def = (&qt.y - y_pred).norm();
    let w = WeylDescriptor::new(r.to_vec());
    let two_step = apply_gaussian_map(&apply_gaussian_map(&w, &qt.x, &qt.y), &ps.x, &ps.y);
    let one_step = apply_gaussian_map(&w, &pst.x, &pst.y);
    let r_def = two_step.r.iter().zip(&one_step.r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(CocycleDefects {
        x: x_def,
        y: y_def,
        descriptor_r: r_def,
        descriptor_log_prefactor: (two_step.log_prefactor - one_step.log_prefactor).abs(),
    })
}

/// ‖σ(ω_t) − M_t σ(ω_0) M_t^tr‖_F along a trajectory.
pub fn sigma_transport_defect(model: &Model, traj: &MacroTrajectory) -> f64 {
    let s0 = sigma_real(model, traj.omega0());
    traj.states
        .iter()
        .zip(&traj.propagators)
        .map(|(w, m)| (sigma_real(model, w) - m * &s0 * m.transpose()).norm())
        .fold(0.0, f64::max)
}

/// max_t ‖dσ/dt − [D(ω_t), σ(ω_t)]‖ with central differences of step h at the given times.
pub fn sigma_derivative_defect(model: &Model, omega0: &[f64], times: &[f64], h: f64, ode_opts: &OdeOptions) -> Result<f64> {
    let mut grid = vec![0.0];
    for &t in times {
        if t < h {
            return Err(Error::OutOfRange { t, lo: h, hi: f64::INFINITY });
        }
        grid.extend_from_slice(&[t - h, t, t + h]);
    }
    let grid = macroflow::merge_times(grid, &[]);
    let ws = macroflow::evolve_omega(model, omega0, &grid, ode_opts)?;
    let at = |t: f64| -> &Vec<f64> {
        let i = grid.binary_search_by(|x| x.total_cmp(&t)).unwrap();
        &ws[i]
    };
    let mut worst: f64 = 0.0;
    for &t in times {
        let ds = (sigma_real(model, at(t + h)) - sigma_real(model, at(t - h))) / (2.0 * h);
        let w = at(t);
        let d = macroflow::drift_real(model, w);
        let s = sigma_real(model, w);
        let comm = &d * &s - &s * &d;
        worst = worst.max((ds - comm).norm());
    }
    Ok(worst)
}
