//! Nonlinear macroscopic flow ω' = D(ω)ω and its propagator M' = D(ω)M.

use serde::Serialize;

use crate::algebra::Model;
use crate::error::{Error, Result};
use crate::linalg::{self, RMat};
use crate::ode::{self, DenseOutput, OdeOptions};

/// D(ω) = D̃(ω) + iℰ, checked for realness and antisymmetry.
pub fn drift_matrix(model: &Model, omega: &[f64]) -> Result<RMat> {
    let n = model.n();
    if omega.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: omega.len() });
    }
    let c = &model.coeffs;
    let om = nalgebra::DVector::from_iterator(
        n,
        omega.iter().map(|&w| num_complex::Complex64::new(w, 0.0)),
    );
    let bw = &c.btilde * om;
    let dt = model.j.contract(bw.as_slice());
    let dfull = dt + linalg::to_complex(&c.ie);
    let scale = 1.0 + linalg::frob(&dfull);
    let residue = linalg::max_abs_im(&dfull);
    if residue > model.tol.alg * scale {
        return Err(Error::Consistency { what: "drift matrix D", residue });
    }
    let d = linalg::re(&dfull);
    let asym = (&d + d.transpose()).norm();
    if asym > model.tol.alg * scale {
        return Err(Error::Consistency { what: "drift matrix antisymmetry", residue: asym });
    }
    Ok(d)
}

/// Real-arithmetic drift: J·B̃ω = (i Im J)(i Im B̃ ω) = −Im J · (Im B̃ ω).
pub fn drift_real(model: &Model, omega: &[f64]) -> RMat {
    let c = &model.coeffs;
    let n = model.n();
    let mut bw = vec![0.0; n];
    for (mu, out) in bw.iter_mut().enumerate() {
        *out = (0..n).map(|nu| c.btilde_im[(mu, nu)] * omega[nu]).sum();
    }
    let mut d = model.j.contract_im(&bw);
    d.neg_mut();
    d += &c.ie;
    d
}

fn macro_rhs(model: &Model, n: usize, y: &[f64], dy: &mut [f64], with_m: bool) {
    let d = drift_real(model, &y[..n]);
    let w = nalgebra::DVector::from_column_slice(&y[..n]);
    dy[..n].copy_from_slice((&d * w).as_slice());
    if with_m {
        let m = linalg::unpack_real(&y[n..n + n * n], n, n);
        linalg::pack_real(&(&d * m), &mut dy[n..n + n * n]);
    }
}

#[derive(Debug, Clone)]
pub struct MacroOptions {
    pub ode: OdeOptions,
    pub grid_points: usize,
    /// extra grid times merged into the uniform grid
    pub extra_times: Vec<f64>,
}

impl Default for MacroOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), grid_points: 101, extra_times: Vec::new() }
    }
}

pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
    let m = points.max(2) - 1;
    (0..=m).map(|k| t_end * k as f64 / m as f64).collect()
}

pub fn merge_times(mut grid: Vec<f64>, extra: &[f64]) -> Vec<f64> {
    grid.extend_from_slice(extra);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone)]
pub struct MacroTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub propagators: Vec<RMat>,
    dense: Option<DenseOutput>,
    n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryInvariants {
    pub orthogonality: f64,
    pub conservation: f64,
    pub propagator_consistency: f64,
    pub min_state_eig: f64,
    pub identity_component_drift: f64,
}

impl MacroTrajectory {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn omega0(&self) -> &[f64] {
        &self.states[0]
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.t_end() || !t.is_finite() {
            return Err(Error::OutOfRange { t, lo: 0.0, hi: self.t_end() });
        }
        Ok(())
    }

    fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        self.check_range(t)?;
        if let Ok(i) = self.times.binary_search_by(|x| x.total_cmp(&t)) {
            let n = self.n;
            let mut y = self.states[i].clone();
            y.extend_from_slice(self.propagators[i].as_slice());
            debug_assert_eq!(y.len(), n + n * n);
            return Ok(y);
        }
        self.dense
            .as_ref()
            .and_then(|d| d.eval(t))
            .ok_or(Error::OutOfRange { t, lo: 0.0, hi: self.t_end() })
    }

    /// ω_t from the grid or the continuous extension between grid points.
    pub fn omega_at(&self, t: f64) -> Result<Vec<f64>> {
        let y = self.state_at(t)?;
        Ok(y[..self.n].to_vec())
    }

    pub fn propagator_at(&self, t: f64) -> Result<RMat> {
        let n = self.n;
        let y = self.state_at(t)?;
        Ok(linalg::unpack_real(&y[n..], n, n))
    }

    pub fn invariants(&self, model: &Model) -> TrajectoryInvariants {
        let n = self.n;
        let w0 = nalgebra::DVector::from_column_slice(self.omega0());
        let k0 = w0.norm_squared();
        let id = model.basis.identity_index();
        let mut inv = TrajectoryInvariants {
            orthogonality: 0.0,
            conservation: 0.0,
            propagator_consistency: 0.0,
            min_state_eig: f64::INFINITY,
            identity_component_drift: 0.0,
        };
        for (w, m) in self.states.iter().zip(&self.propagators) {
            let wt = nalgebra::DVector::from_column_slice(w);
            inv.orthogonality = inv
                .orthogonality
                .max((m.transpose() * m - RMat::identity(n, n)).norm());
            inv.conservation = inv.conservation.max((wt.norm_squared() - k0).abs());
            inv.propagator_consistency =
                inv.propagator_consistency.max((&wt - m * &w0).norm());
            inv.min_state_eig = inv
                .min_state_eig
                .min(linalg::hermitian_min_eig(&model.basis.rho(w)));
            inv.identity_component_drift =
                inv.identity_component_drift.max((w[id] - w0[id]).abs());
        }
        inv
    }
}

/// Integrates the macroscopic flow on an explicit increasing grid starting at 0.
pub fn integrate_macro_at(
    model: &Model,
    omega0: &[f64],
    times: &[f64],
    ode_opts: &OdeOptions,
) -> Result<MacroTrajectory> {
    model.check_state(omega0)?;
    let n = model.n();
    if times.first() != Some(&0.0) {
        return Err(Error::InvalidState("grid must start at t = 0".into()));
    }
    let mut y0 = omega0.to_vec();
    y0.extend_from_slice(RMat::identity(n, n).as_slice());
    let sol = ode::integrate(
        |_, y, dy| macro_rhs(model, n, y, dy, true),
        0.0,
        &y0,
        times,
        &ode_opts.with_dense(true),
    )?;
    let states = sol.states.iter().map(|y| y[..n].to_vec()).collect();
    let propagators = sol
        .states
        .iter()
        .map(|y| linalg::unpack_real(&y[n..], n, n))
        .collect();
    Ok(MacroTrajectory { times: sol.times, states, propagators, dense: sol.dense, n })
}

pub fn integrate_macro(
    model: &Model,
    omega0: &[f64],
    t_end: f64,
    opts: &MacroOptions,
) -> Result<MacroTrajectory> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::OutOfRange { t: t_end, lo: 0.0, hi: f64::INFINITY });
    }
    let extra: Vec<f64> = opts.extra_times.iter().copied().filter(|&t| t >= 0.0 && t <= t_end).collect();
    let grid = merge_times(uniform_grid(t_end, opts.grid_points), &extra);
    integrate_macro_at(model, omega0, &grid, &opts.ode)
}

/// ω at the listed times, without the propagator.
pub fn evolve_omega(model: &Model, omega0: &[f64], times: &[f64], ode_opts: &OdeOptions) -> Result<Vec<Vec<f64>>> {
    let n = model.n();
    let sol = ode::integrate(
        |_, y, dy| macro_rhs(model, n, y, dy, false),
        0.0,
        omega0,
        times,
        ode_opts,
    )?;
    Ok(sol.states)
}

/// ‖(ω_s evolved for t) − ω_{s+t}‖.
pub fn check_semigroup(
    model: &Model,
    traj: &MacroTrajectory,
    s: f64,
    t: f64,
    ode_opts: &OdeOptions,
) -> Result<f64> {
    if s < 0.0 || t < 0.0 || s + t > traj.t_end() {
        return Err(Error::OutOfRange { t: s + t, lo: 0.0, hi: traj.t_end() });
    }
    let ws = traj.omega_at(s)?;
    // reuse the trajectory grid shifted by s so that s = 0 retraces the same steps
    let mut rel: Vec<f64> = traj
        .times
        .iter()
        .filter(|&&x| x >= s && x <= s + t)
        .map(|&x| x - s)
        .collect();
    rel.push(t);
    if rel[0] != 0.0 {
        rel.insert(0, 0.0);
    }
    let rel = merge_times(rel, &[]);
    let mut y0 = ws.clone();
    let n = model.n();
    y0.extend_from_slice(RMat::identity(n, n).as_slice());
    let sol = ode::integrate(
        |_, y, dy| macro_rhs(model, n, y, dy, true),
        0.0,
        &y0,
        &rel,
        ode_opts,
    )?;
    let evolved = &sol.states.last().unwrap()[..n];
    let target = traj.omega_at(s + t)?;
    Ok(evolved
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}
