//! Exact finite-N Lindblad evolution of the chain started from ρ(ω_0)^{⊗N}.
//!
//! States are column-major d^N×d^N matrices with site 0 as the most significant tensor factor.

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::{BasisSet, Model};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, I, ONE, ZERO};
use crate::macroflow;
use crate::mesoflow;
use crate::ode::{self, OdeOptions};

/// Largest d^N for which collective operators are materialized as dense matrices.
pub const DENSE_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct ChainState {
    pub n_sites: usize,
    pub d: usize,
    pub rho: CMat,
}

impl ChainState {
    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.rho)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.rho)
    }

    pub fn min_eig(&self) -> f64 {
        linalg::hermitian_min_eig(&linalg::hermitian_part(&self.rho))
    }
}

struct Channel {
    /// single-site factor of V_μ
    v: CMat,
    /// Σ_ν h_μν v_ν
    g: Option<CMat>,
    /// Σ_ν C_μν v_ν
    w: Option<CMat>,
    /// −i g − ½ w
    z: CMat,
}

struct DenseOps {
    /// h^(N) + H^(N)
    ham: CMat,
    v: Vec<CMat>,
    w: Vec<Option<CMat>>,
}

/// Lindblad generator of the N-site chain with collective operators V_μ = (1/√N) Σ_k v_μ^(k).
pub struct Chain {
    pub d: usize,
    pub n_sites: usize,
    dim: usize,
    local: CMat,
    channels: Vec<Channel>,
    dense: Option<DenseOps>,
    use_dense: bool,
}

fn check_capacity(d: usize, n_sites: usize, cap: usize) -> Result<usize> {
    let dim = u32::try_from(n_sites).ok().and_then(|n| d.checked_pow(n)).unwrap_or(usize::MAX);
    if dim > cap {
        return Err(Error::Capacity { dim, cap });
    }
    Ok(dim)
}

fn is_zero(m: &CMat) -> bool {
    m.iter().all(|z| *z == ZERO)
}

/// dst += c · op^(k) src, with src/dst column-major dim×dim.
fn accumulate_left(op: &CMat, k: usize, n_sites: usize, src: &[Complex64], dst: &mut [Complex64], c: Complex64) {
    let d = op.nrows();
    let dim = d.pow(n_sites as u32);
    let stride = d.pow((n_sites - k - 1) as u32);
    let block = stride * d;
    let outer = dim / block;
    let mut coef = vec![ZERO; d * d];
    for p in 0..d {
        for a in 0..d {
            coef[p * d + a] = c * op[(p, a)];
        }
    }
    for col in 0..dim {
        let s = &src[col * dim..(col + 1) * dim];
        let t = &mut dst[col * dim..(col + 1) * dim];
        for o in 0..outer {
            let base = o * block;
            for p in 0..d {
                let out = &mut t[base + p * stride..base + (p + 1) * stride];
                for a in 0..d {
                    let f = coef[p * d + a];
                    if f == ZERO {
                        continue;
                    }
                    let inp = &s[base + a * stride..base + (a + 1) * stride];
                    for (x, y) in out.iter_mut().zip(inp) {
                        *x += f * y;
                    }
                }
            }
        }
    }
}

/// dst += c · src op^(k): whole columns of src are combined.
fn accumulate_right(op: &CMat, k: usize, n_sites: usize, src: &[Complex64], dst: &mut [Complex64], c: Complex64) {
    let d = op.nrows();
    let dim = d.pow(n_sites as u32);
    let stride = d.pow((n_sites - k - 1) as u32);
    let block = stride * d;
    let outer = dim / block;
    for o in 0..outer {
        for q in 0..d {
            for s in 0..stride {
                let j = o * block + q * stride + s;
                let out = &mut dst[j * dim..(j + 1) * dim];
                for b in 0..d {
                    let f = c * op[(b, q)];
                    if f == ZERO {
                        continue;
                    }
                    let jb = o * block + b * stride + s;
                    let inp = &src[jb * dim..(jb + 1) * dim];
                    for (x, y) in out.iter_mut().zip(inp) {
                        *x += f * y;
                    }
                }
            }
        }
    }
}

impl Chain {
    pub fn new(model: &Model, n_sites: usize, cap: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidState("chain needs at least one site".into()));
        }
        let d = model.d();
        let dim = check_capacity(d, n_sites, cap)?;
        let n = model.n();
        let basis = &model.basis;
        let eps: Vec<f64> = model.spec.eps_re();
        let local = basis.combine_real(&eps);
        let mut channels = Vec::new();
        for mu in 0..n {
            let hrow: Vec<Complex64> = (0..n).map(|nu| model.spec.h[(mu, nu)]).collect();
            let crow: Vec<Complex64> = (0..n).map(|nu| model.spec.c[(mu, nu)]).collect();
            let g = basis.combine(&hrow);
            let w = basis.combine(&crow);
            let g = (!is_zero(&g)).then_some(g);
            let w = (!is_zero(&w)).then_some(w);
            if g.is_none() && w.is_none() {
                continue;
            }
            let mut z = CMat::zeros(d, d);
            if let Some(g) = &g {
                z -= g * I;
            }
            if let Some(w) = &w {
                z -= w * Complex64::new(0.5, 0.0);
            }
            channels.push(Channel { v: basis.v[mu].clone(), g, w, z });
        }
        let mut chain = Self { d, n_sites, dim, local, channels, dense: None, use_dense: false };
        if dim <= DENSE_LIMIT {
            chain.dense = Some(chain.materialize());
            chain.use_dense = true;
        }
        Ok(chain)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Selects the dense path (when available) or the matrix-free one.
    pub fn set_dense(&mut self, on: bool) {
        self.use_dense = on && self.dense.is_some();
    }

    fn collective(&self, op: &CMat) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for k in 0..self.n_sites {
            out += linalg::embed(op, k, self.n_sites);
        }
        out
    }

    fn materialize(&self) -> DenseOps {
        let scale = 1.0 / (self.n_sites as f64).sqrt();
        let mut ham = self.collective(&self.local);
        let mut v = Vec::new();
        let mut w = Vec::new();
        for ch in &self.channels {
            let vm = self.collective(&ch.v) * Complex64::new(scale, 0.0);
            if let Some(g) = &ch.g {
                ham += &vm * self.collective(g) * Complex64::new(scale, 0.0);
            }
            w.push(ch.w.as_ref().map(|x| self.collective(x) * Complex64::new(scale, 0.0)));
            v.push(vm);
        }
        DenseOps { ham, v, w }
    }

    /// Total hamiltonian h^(N) + H^(N) as a dense matrix.
    pub fn hamiltonian(&self) -> CMat {
        match &self.dense {
            Some(d) => d.ham.clone(),
            None => self.materialize().ham,
        }
    }

    /// V_μ = (1/√N) Σ_k v_μ^(k) for every basis element.
    pub fn collective_ops(&self, model: &Model) -> Vec<CMat> {
        let scale = Complex64::new(1.0 / (self.n_sites as f64).sqrt(), 0.0);
        model.basis.v.iter().map(|v| self.collective(v) * scale).collect()
    }

    /// dρ/dt = −i[h^(N) + H^(N), ρ] + Σ C_μν (V_ν ρ V_μ − ½{V_μ V_ν, ρ}).
    pub fn rhs(&self, rho: &CMat) -> CMat {
        if self.use_dense {
            return self.rhs_dense(rho);
        }
        self.rhs_local(rho)
    }

    fn rhs_dense(&self, rho: &CMat) -> CMat {
        let ops = self.dense.as_ref().expect("dense operators");
        let mut t = &ops.ham * rho * (-I);
        let mut jump = CMat::zeros(self.dim, self.dim);
        for (v, w) in ops.v.iter().zip(&ops.w) {
            if let Some(w) = w {
                let wr = w * rho;
                t -= v * &wr * Complex64::new(0.5, 0.0);
                jump += wr * v;
            }
        }
        let mut out = &t + t.adjoint();
        out += jump;
        out
    }

    fn rhs_local(&self, rho: &CMat) -> CMat {
        let dim = self.dim;
        let ns = self.n_sites;
        let inv_n = Complex64::new(1.0 / ns as f64, 0.0);
        let src = rho.as_slice();
        let mut t = vec![ZERO; dim * dim];
        let mut jump = vec![ZERO; dim * dim];
        let mut tz = vec![ZERO; dim * dim];
        let mut tw = vec![ZERO; dim * dim];
        for k in 0..ns {
            accumulate_left(&self.local, k, ns, src, &mut t, -I);
        }
        for ch in &self.channels {
            tz.iter_mut().for_each(|x| *x = ZERO);
            for k in 0..ns {
                accumulate_left(&ch.z, k, ns, src, &mut tz, ONE);
            }
            for l in 0..ns {
                accumulate_left(&ch.v, l, ns, &tz, &mut t, inv_n);
            }
            if let Some(w) = &ch.w {
                tw.iter_mut().for_each(|x| *x = ZERO);
                for k in 0..ns {
                    accumulate_left(w, k, ns, src, &mut tw, ONE);
                }
                for l in 0..ns {
                    accumulate_right(&ch.v, l, ns, &tw, &mut jump, inv_n);
                }
            }
        }
        let t = CMat::from_column_slice(dim, dim, &t);
        let mut out = &t + t.adjoint();
        out += CMat::from_column_slice(dim, dim, &jump);
        out
    }

    pub fn product_state(&self, rho1: &CMat) -> CMat {
        linalg::tensor_power(rho1, self.n_sites)
    }

    /// ρ_t at the requested times (non-decreasing, starting anywhere ≥ 0).
    pub fn evolve(&self, rho0: &CMat, times: &[f64], ode_opts: &OdeOptions) -> Result<Vec<ChainState>> {
        let dim = self.dim;
        let mut y0 = vec![0.0; 2 * dim * dim];
        linalg::pack_complex(rho0, &mut y0);
        let sol = ode::integrate(
            |_, y, dy| {
                let rho = linalg::unpack_complex(y, dim, dim);
                linalg::pack_complex(&self.rhs(&rho), dy);
            },
            0.0,
            &y0,
            times,
            ode_opts,
        )?;
        Ok(sol
            .states
            .iter()
            .map(|y| ChainState { n_sites: self.n_sites, d: self.d, rho: linalg::unpack_complex(y, dim, dim) })
            .collect())
    }
}

pub fn lindblad_rhs(model: &Model, n_sites: usize, rho: &CMat) -> Result<CMat> {
    let chain = Chain::new(model, n_sites, model.tol.oracle_cap)?;
    if rho.nrows() != chain.dim() || rho.ncols() != chain.dim() {
        return Err(Error::DimensionMismatch { expected: chain.dim(), got: rho.nrows() });
    }
    Ok(chain.rhs(rho))
}

pub fn product_state(model: &Model, omega0: &[f64], n_sites: usize) -> Result<ChainState> {
    model.check_state(omega0)?;
    let d = model.d();
    check_capacity(d, n_sites, model.tol.oracle_cap)?;
    let rho1 = model.basis.rho(omega0);
    Ok(ChainState { n_sites, d, rho: linalg::tensor_power(&rho1, n_sites) })
}

/// ρ(ω_0)^{⊗N} evolved to each of `times`.
pub fn evolve_exact(
    model: &Model,
    n_sites: usize,
    omega0: &[f64],
    times: &[f64],
    ode_opts: &OdeOptions,
) -> Result<Vec<ChainState>> {
    let s0 = product_state(model, omega0, n_sites)?;
    let chain = Chain::new(model, n_sites, model.tol.oracle_cap)?;
    chain.evolve(&s0.rho, times, ode_opts)
}

/// Single-site marginal of site k.
pub fn reduced_site(state: &ChainState, k: usize) -> CMat {
    let (d, n) = (state.d, state.n_sites);
    let stride = d.pow((n - k - 1) as u32);
    let block = stride * d;
    let outer = state.dim() / block;
    CMat::from_fn(d, d, |a, b| {
        let mut acc = ZERO;
        for o in 0..outer {
            for s in 0..stride {
                acc += state.rho[(o * block + a * stride + s, o * block + b * stride + s)];
            }
        }
        acc
    })
}

/// Two-site marginal of sites k < l, with site k as the first factor.
pub fn reduced_pair(state: &ChainState, k: usize, l: usize) -> CMat {
    let (d, n) = (state.d, state.n_sites);
    let dim = state.dim();
    let sk = d.pow((n - k - 1) as u32);
    let sl = d.pow((n - l - 1) as u32);
    let mut out = CMat::zeros(d * d, d * d);
    for i in 0..dim {
        let (ik, il) = ((i / sk) % d, (i / sl) % d);
        let rest = i - ik * sk - il * sl;
        for jk in 0..d {
            for jl in 0..d {
                let j = rest + jk * sk + jl * sl;
                out[(ik * d + il, jk * d + jl)] += state.rho[(i, j)];
            }
        }
    }
    out
}

/// ω^(N)_α = Tr(ρ_t (1/N) Σ_k v_α^(k)).
pub fn macro_moments(state: &ChainState, basis: &BasisSet) -> Vec<f64> {
    let mut s1 = CMat::zeros(state.d, state.d);
    for k in 0..state.n_sites {
        s1 += reduced_site(state, k);
    }
    let nf = state.n_sites as f64;
    basis.v.iter().map(|v| linalg::trace_product(&s1, v).re / nf).collect()
}

/// Second moments of F_μ = (1/√N) Σ_k (v_μ^(k) − ω^(N)_μ): the symmetrized real part and
/// the commutator matrix ⟨[F_μ, F_ν]⟩/i = 2 Im⟨F_μ F_ν⟩.
pub fn fluctuation_moments(state: &ChainState, basis: &BasisSet, omega_n: &[f64]) -> (RMat, RMat) {
    let (d, ns) = (state.d, state.n_sites);
    let n = basis.n();
    let mut s1 = CMat::zeros(d, d);
    for k in 0..ns {
        s1 += reduced_site(state, k);
    }
    let mut p = CMat::zeros(d * d, d * d);
    for k in 0..ns {
        for l in k + 1..ns {
            p += reduced_pair(state, k, l);
        }
    }
    let nf = ns as f64;
    let mut vv = CMat::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let single = linalg::trace_product(&s1, &(&basis.v[a] * &basis.v[b]));
            let pair = linalg::trace_product(&p, &linalg::kron(&basis.v[a], &basis.v[b]))
                + linalg::trace_product(&p, &linalg::kron(&basis.v[b], &basis.v[a]));
            vv[(a, b)] = (single + pair) / nf;
        }
    }
    let sym = RMat::from_fn(n, n, |a, b| {
        0.5 * (vv[(a, b)].re + vv[(b, a)].re) - nf * omega_n[a] * omega_n[b]
    });
    let asym = RMat::from_fn(n, n, |a, b| vv[(a, b)].im - vv[(b, a)].im);
    (sym, asym)
}

/// Dense Heisenberg-picture generator L[x] = i[H, x] + Σ C_μν (V_μ x V_ν − ½{V_μ V_ν, x}).
pub struct HeisenbergGenerator {
    pub ham: CMat,
    pub v: Vec<CMat>,
    pub c: CMat,
    pub vv: CMat,
}

impl HeisenbergGenerator {
    pub const MAX_SITES: usize = 3;

    pub fn new(model: &Model, n_sites: usize) -> Result<Self> {
        if n_sites > Self::MAX_SITES {
            return Err(Error::Capacity { dim: model.d().pow(n_sites as u32), cap: model.d().pow(3) });
        }
        let chain = Chain::new(model, n_sites, model.tol.oracle_cap)?;
        let v = chain.collective_ops(model);
        let dim = chain.dim();
        let c = model.spec.c.clone();
        let mut vv = CMat::zeros(dim, dim);
        for (a, va) in v.iter().enumerate() {
            for (b, vb) in v.iter().enumerate() {
                if c[(a, b)] != ZERO {
                    vv += va * vb * c[(a, b)];
                }
            }
        }
        Ok(Self { ham: chain.hamiltonian(), v, c, vv })
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        let mut out = linalg::commutator(&self.ham, x) * I;
        for (a, va) in self.v.iter().enumerate() {
            let vax = va * x;
            for (b, vb) in self.v.iter().enumerate() {
                let c = self.c[(a, b)];
                if c != ZERO {
                    out += &vax * vb * c;
                }
            }
        }
        out -= (&self.vv * x + x * &self.vv) * Complex64::new(0.5, 0.0);
        out
    }

    /// Σ C_μν [V_μ, x][y, V_ν].
    pub fn dissipation_form(&self, x: &CMat, y: &CMat) -> CMat {
        let dim = x.nrows();
        let mut out = CMat::zeros(dim, dim);
        for (a, va) in self.v.iter().enumerate() {
            let ca = linalg::commutator(va, x);
            for (b, vb) in self.v.iter().enumerate() {
                let c = self.c[(a, b)];
                if c != ZERO {
                    out += &ca * linalg::commutator(y, vb) * c;
                }
            }
        }
        out
    }

    /// ‖L[xy] − L[x]y − xL[y] − Σ C_μν [V_μ, x][y, V_ν]‖_F.
    pub fn dissipation_defect(&self, x: &CMat, y: &CMat) -> f64 {
        let lhs = self.apply(&(x * y)) - self.apply(x) * y - x * self.apply(y);
        linalg::frob(&(lhs - self.dissipation_form(x, y)))
    }

    /// γ_t[O] at each of `times`.
    pub fn evolve(&self, o: &CMat, times: &[f64], ode_opts: &OdeOptions) -> Result<Vec<CMat>> {
        let dim = o.nrows();
        let mut y0 = vec![0.0; 2 * dim * dim];
        linalg::pack_complex(o, &mut y0);
        let sol = ode::integrate(
            |_, y, dy| {
                let x = linalg::unpack_complex(y, dim, dim);
                linalg::pack_complex(&self.apply(&x), dy);
            },
            0.0,
            &y0,
            times,
            ode_opts,
        )?;
        Ok(sol.states.iter().map(|y| linalg::unpack_complex(y, dim, dim)).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub omega_defect: f64,
    pub component_defects: Vec<f64>,
    pub sym_defect: f64,
    pub asym_defect: f64,
    pub omega: Vec<f64>,
    pub trace_defect: f64,
    pub min_eig: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub t: f64,
    pub rows: Vec<SweepRow>,
    /// None when every defect sits at roundoff level
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub residual: Option<f64>,
    pub sym_slope: Option<f64>,
    pub asym_slope: Option<f64>,
    pub sym_monotone: bool,
    pub asym_monotone: bool,
    pub reference_omega: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub ode: OdeOptions,
    pub workers: usize,
    /// defects below this are treated as roundoff when fitting
    pub floor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), workers: 1, floor: 1e-12 }
    }
}

/// Least-squares fit of log y = a + s log x; returns (slope, intercept, rms residual).
pub fn loglog_fit(x: &[f64], y: &[f64], floor: f64) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &y)| y > floor)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let s = sxy / sxx;
    let a = my - s * mx;
    let res = (pts.iter().map(|p| (p.1 - a - s * p.0).powi(2)).sum::<f64>() / m).sqrt();
    Some((s, a, res))
}

fn sweep_one(
    model: &Model,
    omega0: &[f64],
    t: f64,
    n_sites: usize,
    reference: &(Vec<f64>, RMat, RMat),
    ode_opts: &OdeOptions,
) -> Result<SweepRow> {
    let states = evolve_exact(model, n_sites, omega0, &[0.0, t], ode_opts)?;
    let st = states.last().expect("final state");
    let wn = macro_moments(st, &model.basis);
    let (sym, asym) = fluctuation_moments(st, &model.basis, &wn);
    let (w, cov, sigma) = reference;
    let component_defects: Vec<f64> = wn.iter().zip(w).map(|(a, b)| (a - b).abs()).collect();
    Ok(SweepRow {
        n: n_sites,
        omega_defect: component_defects.iter().map(|x| x * x).sum::<f64>().sqrt(),
        component_defects,
        sym_defect: (&sym - cov).norm(),
        asym_defect: (&asym - sigma).norm(),
        omega: wn,
        trace_defect: (st.trace() - ONE).norm(),
        min_eig: st.min_eig(),
    })
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Finite-N defects of ω^(N)(t), the symmetric and the antisymmetric fluctuation moments
/// against ω_t, Σ_t and σ(ω_t), with a log-log fit of the macroscopic defect against N.
pub fn convergence_study(
    model: &Model,
    omega0: &[f64],
    t: f64,
    n_list: &[usize],
    opts: &SweepOptions,
) -> Result<ConvergenceReport> {
    if n_list.len() < 3 {
        return Err(Error::InsufficientData(n_list.len()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: f64::INFINITY });
    }
    for &n in n_list {
        check_capacity(model.d(), n, model.tol.oracle_cap)?;
    }
    let mut times = vec![0.0];
    if t > 0.0 {
        times.push(t);
    }
    let w = macroflow::evolve_omega(model, omega0, &times, &opts.ode)?.pop().expect("final state");
    let flow = mesoflow::integrate_flow_at(model, omega0, &times, &opts.ode)?;
    let at = flow.point(flow.times.len() - 1);
    let k0 = mesoflow::product_state_kernel(model, omega0)?;
    let kt = mesoflow::transport_covariance(&k0, &at, model.tol.psd)?;
    let reference = (w, kt.cov, at.sigma.clone());

    let workers = opts.workers.max(1).min(n_list.len());
    let mut results: Vec<Option<Result<SweepRow>>> = (0..n_list.len()).map(|_| None).collect();
    if workers == 1 {
        for (slot, &n) in results.iter_mut().zip(n_list) {
            *slot = Some(sweep_one(model, omega0, t, n, &reference, &opts.ode));
        }
    } else {
        // largest systems first so the slowest job starts immediately
        let mut order: Vec<usize> = (0..n_list.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(n_list[i]));
        let next = std::sync::atomic::AtomicUsize::new(0);
        let collected = std::sync::Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if k >= order.len() {
                        break;
                    }
                    let i = order[k];
                    let r = sweep_one(model, omega0, t, n_list[i], &reference, &opts.ode);
                    collected.lock().expect("sweep results").push((i, r));
                });
            }
        });
        for (i, r) in collected.into_inner().expect("sweep results") {
            results[i] = Some(r);
        }
    }
    let rows: Vec<SweepRow> = results.into_iter().map(|r| r.expect("sweep row")).collect::<Result<_>>()?;

    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let od: Vec<f64> = rows.iter().map(|r| r.omega_defect).collect();
    let sd: Vec<f64> = rows.iter().map(|r| r.sym_defect).collect();
    let ad: Vec<f64> = rows.iter().map(|r| r.asym_defect).collect();
    let fit = loglog_fit(&ns, &od, opts.floor);
    Ok(ConvergenceReport {
        t,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        residual: fit.map(|f| f.2),
        sym_slope: loglog_fit(&ns, &sd, opts.floor).map(|f| f.0),
        asym_slope: loglog_fit(&ns, &ad, opts.floor).map(|f| f.0),
        sym_monotone: decreasing(&sd),
        asym_monotone: decreasing(&ad),
        reference_omega: reference.0,
        rows,
    })
}
