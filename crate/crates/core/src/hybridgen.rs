//! Kernel/complement split of σ(ω) and the hybrid classical-quantum generator blocks.

use std::ops::Range;

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::Model;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, I};
use crate::macroflow::{self, MacroTrajectory};
use crate::mesoflow::{self, SymplecticForm};
use crate::ode::OdeOptions;

#[derive(Debug, Clone)]
pub struct KernelSplit {
    /// rows: kernel basis, then canonical pairs (u_k, v_k) with u_k·σv_k = λ_k > 0
    pub r: RMat,
    pub d0: usize,
    pub d1: usize,
    pub sigma11: RMat,
    pub singular_values: Vec<f64>,
    pub tol: f64,
}

impl KernelSplit {
    pub fn rotated(&self, m: &RMat) -> RMat {
        &self.r * m * self.r.transpose()
    }

    pub fn rotated_c(&self, m: &CMat) -> CMat {
        let r = linalg::to_complex(&self.r);
        &r * m * r.transpose()
    }

    pub fn kernel(&self) -> Range<usize> {
        0..self.d0
    }

    pub fn range(&self) -> Range<usize> {
        self.d0..self.d0 + self.d1
    }
}

fn fix_sign(v: &mut nalgebra::DVector<f64>) {
    let scale = v.amax();
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
        if *x < 0.0 {
            v.neg_mut();
        }
    }
}

fn orthogonalize(v: &mut nalgebra::DVector<f64>, basis: &[nalgebra::DVector<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(v);
            v.axpy(-c, b, 1.0);
        }
    }
}

/// Orthogonal R with R σ R^tr = diag(0_{d0}, σ11), σ11 a direct sum of [[0, λ],[−λ, 0]] blocks
/// with λ descending. The rank is read off the singular values at threshold tol_rank·σ_max;
/// the pair directions come from the eigenvectors of σ^tr σ.
pub fn kernel_split(sigma: &SymplecticForm, tol_rank: f64) -> Result<KernelSplit> {
    let s = &sigma.sigma;
    let n = s.nrows();
    let scale = s.norm();
    let asym = (s + s.transpose()).norm();
    if asym > 1e-12 * (1.0 + scale) {
        return Err(Error::Consistency { what: "symplectic form antisymmetry", residue: asym });
    }
    let sts = s.transpose() * s;
    let eig = sts.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut singular: Vec<f64> = s.clone().svd(false, false).singular_values.iter().copied().collect();
    singular.sort_by(|a, b| b.total_cmp(a));
    let smax = singular.first().copied().unwrap_or(0.0);
    let tol = tol_rank * smax;
    let mut rank = 0;
    if smax > 0.0 {
        for &sv in &singular {
            if sv > tol / 10.0 && sv < 10.0 * tol {
                return Err(Error::RankAmbiguity { value: sv, tol });
            }
            if sv > tol {
                rank += 1;
            }
        }
    }
    if rank % 2 == 1 {
        return Err(Error::RankAmbiguity { value: singular[rank - 1], tol });
    }

    let mut range_rows: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(rank);
    for &k in order.iter().take(rank) {
        if range_rows.len() == rank {
            break;
        }
        let mut u = eig.eigenvectors.column(k).into_owned();
        orthogonalize(&mut u, &range_rows);
        let nu = u.norm();
        if nu < 0.5 {
            continue;
        }
        u /= nu;
        fix_sign(&mut u);
        let mut v = -(s * &u);
        orthogonalize(&mut v, &range_rows);
        let nv = v.norm();
        v /= nv;
        range_rows.push(u);
        range_rows.push(v);
    }
    if range_rows.len() != rank {
        return Err(Error::RankAmbiguity { value: smax, tol });
    }

    let mut kernel_rows: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n - rank);
    let mut candidates: Vec<nalgebra::DVector<f64>> = (0..n)
        .map(|j| {
            let mut e = nalgebra::DVector::zeros(n);
            e[j] = 1.0;
            orthogonalize(&mut e, &range_rows);
            e
        })
        .collect();
    while kernel_rows.len() < n - rank {
        let (best, _) = candidates
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.norm()))
            .fold((0, -1.0), |acc, (j, nrm)| if nrm > acc.1 + 1e-12 { (j, nrm) } else { acc });
        let mut k = candidates[best].clone();
        orthogonalize(&mut k, &kernel_rows);
        k /= k.norm();
        fix_sign(&mut k);
        for c in &mut candidates {
            let p = k.dot(c);
            c.axpy(-p, &k, 1.0);
        }
        kernel_rows.push(k);
    }

    let rows: Vec<_> = kernel_rows.iter().chain(range_rows.iter()).map(|v| v.transpose()).collect();
    let r = RMat::from_rows(&rows);
    let rot = &r * s * r.transpose();
    let d0 = n - rank;
    let sigma11 = rot.view((d0, d0), (rank, rank)).into_owned();
    if rank > 0 {
        let smin = sigma11.clone().svd(false, false).singular_values.min();
        if smin <= tol {
            return Err(Error::SingularBlock(smin));
        }
    }
    Ok(KernelSplit { r, d0, d1: rank, sigma11, singular_values: singular, tol })
}

#[derive(Debug, Clone)]
pub struct HybridBlocks {
    pub d0: usize,
    pub d1: usize,
    pub h11: CMat,
    pub h10: RMat,
    pub h01: RMat,
    pub k11: CMat,
    /// (i/2)[σ11^{-1}, D11]
    pub k11_correction: CMat,
    pub sigma11: RMat,
    pub d_rot: RMat,
    pub a_rot: RMat,
    pub b_rot: CMat,
    pub btilde_rot: CMat,
    pub hre_rot: RMat,
}

fn rblock(m: &RMat, r: Range<usize>, c: Range<usize>) -> RMat {
    m.view((r.start, c.start), (r.len(), c.len())).into_owned()
}

fn cblock(m: &CMat, r: Range<usize>, c: Range<usize>) -> CMat {
    m.view((r.start, c.start), (r.len(), c.len())).into_owned()
}

impl HybridBlocks {
    pub fn d_block(&self, a: usize, b: usize) -> RMat {
        let r = [0..self.d0, self.d0..self.d0 + self.d1];
        rblock(&self.d_rot, r[a].clone(), r[b].clone())
    }

    pub fn a11(&self) -> RMat {
        let q = self.d0..self.d0 + self.d1;
        rblock(&self.a_rot, q.clone(), q)
    }

    pub fn b_block(&self, a: usize, b: usize) -> CMat {
        let r = [0..self.d0, self.d0..self.d0 + self.d1];
        cblock(&self.b_rot, r[a].clone(), r[b].clone())
    }

    pub fn btilde_block(&self, a: usize, b: usize) -> CMat {
        let r = [0..self.d0, self.d0..self.d0 + self.d1];
        cblock(&self.btilde_rot, r[a].clone(), r[b].clone())
    }

    pub fn hre_block(&self, a: usize, b: usize) -> RMat {
        let r = [0..self.d0, self.d0..self.d0 + self.d1];
        rblock(&self.hre_rot, r[a].clone(), r[b].clone())
    }

    /// C11 = A11 + B11, the rotated Kossakowski block.
    pub fn c11(&self) -> CMat {
        linalg::to_complex(&self.a11()) + self.b_block(1, 1)
    }

    pub fn k11_eigenvalues(&self) -> Vec<f64> {
        if self.d1 == 0 {
            return Vec::new();
        }
        linalg::hermitian_eigenvalues(&self.k11)
    }
}

/// H11 = h^(re)11 + ¼{S, D11}, H10 = ½ S D10 − (i/2)B10 + h^(re)10,
/// H01 = ½ D01 S + (i/2)B01 + h^(re)01, K11 = A11 + B11 + (i/2)[S, D11], with S = σ11^{-1}.
pub fn hybrid_blocks(split: &KernelSplit, model: &Model, d: &RMat) -> Result<HybridBlocks> {
    let c = &model.coeffs;
    let (d0, d1) = (split.d0, split.d1);
    let d_rot = split.rotated(d);
    let a_rot = split.rotated(&c.a_re);
    let b_rot = split.rotated_c(&c.b);
    let btilde_rot = split.rotated_c(&c.btilde);
    let hre_rot = split.rotated(&c.hre);
    let mut blocks = HybridBlocks {
        d0,
        d1,
        h11: CMat::zeros(d1, d1),
        h10: RMat::zeros(d1, d0),
        h01: RMat::zeros(d0, d1),
        k11: CMat::zeros(d1, d1),
        k11_correction: CMat::zeros(d1, d1),
        sigma11: split.sigma11.clone(),
        d_rot,
        a_rot,
        b_rot,
        btilde_rot,
        hre_rot,
    };
    if d1 == 0 {
        return Ok(blocks);
    }
    let sinv = split
        .sigma11
        .clone()
        .try_inverse()
        .ok_or(Error::SingularBlock(0.0))?;
    let sc = linalg::to_complex(&sinv);
    let d11 = linalg::to_complex(&blocks.d_block(1, 1));
    let d10 = linalg::to_complex(&blocks.d_block(1, 0));
    let d01 = linalg::to_complex(&blocks.d_block(0, 1));
    let half = Complex64::new(0.5, 0.0);
    let h11 = linalg::to_complex(&blocks.hre_block(1, 1)) + (&sc * &d11 + &d11 * &sc) * Complex64::new(0.25, 0.0);
    let h10 = &sc * &d10 * half - blocks.b_block(1, 0) * (I * 0.5) + linalg::to_complex(&blocks.hre_block(1, 0));
    let h01 = &d01 * &sc * half + blocks.b_block(0, 1) * (I * 0.5) + linalg::to_complex(&blocks.hre_block(0, 1));
    let corr = linalg::commutator(&sc, &d11) * (I * 0.5);
    let k11 = blocks.c11() + &corr;

    let tol = model.tol.alg * (1.0 + linalg::frob(&d11) * linalg::frob(&sc) + linalg::frob(&model.spec.c) + linalg::frob(&model.spec.h));
    for (what, m) in [("H10", &h10), ("H01", &h01)] {
        let residue = linalg::max_abs_im(m);
        if residue > tol {
            return Err(Error::Consistency { what, residue });
        }
    }
    for (what, m) in [("H11 hermiticity", &h11), ("K11 hermiticity", &k11)] {
        let residue = linalg::hermiticity_defect(m);
        if residue > tol {
            return Err(Error::Consistency { what, residue });
        }
    }
    blocks.h11 = linalg::hermitian_part(&h11);
    blocks.h10 = linalg::re(&h10);
    blocks.h01 = linalg::re(&h01);
    blocks.k11 = linalg::hermitian_part(&k11);
    blocks.k11_correction = corr;
    Ok(blocks)
}

/// Split and blocks at a single macroscopic state.
pub fn blocks_at(model: &Model, omega: &[f64]) -> Result<(KernelSplit, HybridBlocks)> {
    let sigma = mesoflow::symplectic_form(model, omega)?;
    let split = kernel_split(&sigma, model.tol.rank)?;
    let d = macroflow::drift_matrix(model, omega)?;
    let blocks = hybrid_blocks(&split, model, &d)?;
    Ok((split, blocks))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub identity_3a: f64,
    pub identity_3b: f64,
    pub identity_3c: f64,
    pub correction_trace: f64,
    pub fd_linear: f64,
    pub fd_quadratic: f64,
    pub lindblad_linear: f64,
    pub lindblad_quadratic: f64,
    pub max_identity: f64,
    pub max_defect: f64,
}

fn sym(m: &CMat) -> CMat {
    (m + m.transpose()) * Complex64::new(0.5, 0.0)
}

/// Checks the block identities relating (H, K) to the fluctuation generator and compares the
/// coefficients of (d/dt)Φ_t at t = 0, extracted by finite differences of (X_t, Y_t), with their
/// rotated predictions.
pub fn generator_consistency(
    model: &Model,
    omega: &[f64],
    split: &KernelSplit,
    blocks: &HybridBlocks,
    h: f64,
) -> Result<ConsistencyReport> {
    let n = model.n();
    let (d0, d1) = (blocks.d0, blocks.d1);
    let q0 = 0..d0;
    let q1 = d0..n;
    let s11 = linalg::to_complex(&blocks.sigma11);
    let d = |a, b| linalg::to_complex(&blocks.d_block(a, b));

    let (mut e3a, mut e3b, mut e3c, mut tr) = (0.0, 0.0, 0.0, 0.0);
    if d1 > 0 {
        let lhs = &s11 * linalg::to_complex(&blocks.h10) * (I * 2.0);
        let rhs = d(1, 0) * I + &s11 * blocks.btilde_block(1, 0);
        e3a = linalg::frob(&(lhs - rhs));
        let lhs = &s11 * &blocks.h11 * (I * 2.0)
            + &s11 * (&blocks.k11 - blocks.k11.transpose()) * Complex64::new(0.5, 0.0);
        let rhs = d(1, 1) * I + &s11 * blocks.btilde_block(1, 1);
        e3b = linalg::frob(&(lhs - rhs));
        let lhs = &s11 * (&blocks.h11 * I + &blocks.k11 * Complex64::new(0.5, 0.0)) * &s11;
        let rhs = &s11 * blocks.c11() * &s11 * Complex64::new(0.5, 0.0)
            + &s11 * linalg::to_complex(&blocks.hre_block(1, 1)) * &s11 * I
            + d(1, 1) * &s11 * (I * 0.5);
        e3c = linalg::frob(&(lhs - rhs));
        tr = linalg::trace(&blocks.k11_correction).norm();
    }

    let tight = OdeOptions { rtol: 1e-13, atol: 1e-15, ..OdeOptions::default() };
    let flow = mesoflow::integrate_flow_at(model, omega, &[0.0, h, 2.0 * h], &tight)?;
    let q_fd = (&flow.x[1] * 4.0 - &flow.x[2] - &flow.x[0] * 3.0) / (2.0 * h);
    let dy_fd = (&flow.y[1] * 4.0 - &flow.y[2] - &flow.y[0] * 3.0) / (2.0 * h);
    let sigma = &flow.sigma[0];
    let lin = linalg::to_complex(&q_fd) * I;
    let quad = (linalg::to_complex(&dy_fd) + linalg::to_complex(&(sigma * q_fd.transpose())) * I) * Complex64::new(-0.5, 0.0);
    let lin_r = split.rotated_c(&lin);
    let quad_r = sym(&split.rotated_c(&quad));

    let mut lin_pred = linalg::to_complex(&blocks.d_rot) * I;
    let mut quad_pred = CMat::zeros(n, n);
    if d1 > 0 {
        let l10 = d(1, 0) * I + &s11 * blocks.btilde_block(1, 0);
        let l11 = d(1, 1) * I + &s11 * blocks.btilde_block(1, 1);
        lin_pred.view_mut((d0, 0), (d1, d0)).copy_from(&l10);
        lin_pred.view_mut((d0, d0), (d1, d1)).copy_from(&l11);
        let p01 = d(0, 1) * &s11 * (I * 0.5);
        let at11 = linalg::to_complex(&blocks.a11()) + blocks.btilde_block(1, 1);
        let p11 = (&s11 * at11 * &s11 + d(1, 1) * &s11 * I) * Complex64::new(0.5, 0.0);
        quad_pred.view_mut((0, d0), (d0, d1)).copy_from(&p01);
        quad_pred.view_mut((d0, d0), (d1, d1)).copy_from(&p11);
    }
    let fd_linear = linalg::frob(&(&lin_r - &lin_pred));
    let fd_quadratic = linalg::frob(&(&quad_r - sym(&quad_pred)));

    let (mut lind_lin, mut lind_quad) = (0.0, 0.0);
    if d1 > 0 {
        let l10 = &s11 * linalg::to_complex(&blocks.h10) * (I * 2.0);
        let l11 = &s11
            * (&blocks.h11 * (I * 2.0) + (&blocks.k11 - blocks.k11.transpose()) * Complex64::new(0.5, 0.0));
        let e10 = linalg::frob(&(cblock(&lin_r, q1.clone(), q0.clone()) - l10));
        let e11 = linalg::frob(&(cblock(&lin_r, q1.clone(), q1.clone()) - l11));
        lind_lin = e10.max(e11);
        let p11 = &s11 * (&blocks.h11 * I + &blocks.k11 * Complex64::new(0.5, 0.0)) * &s11;
        lind_quad = linalg::frob(&(cblock(&quad_r, q1.clone(), q1) - sym(&p11)));
    }

    let max_identity = e3a.max(e3b).max(e3c);
    let report = ConsistencyReport {
        identity_3a: e3a,
        identity_3b: e3b,
        identity_3c: e3c,
        correction_trace: tr,
        fd_linear,
        fd_quadratic,
        lindblad_linear: lind_lin,
        lindblad_quadratic: lind_quad,
        max_identity,
        max_defect: max_identity.max(fd_linear).max(fd_quadratic).max(lind_lin).max(lind_quad),
    };
    let tol_fd = model.tol.fd;
    for (which, v) in [
        ("identity 2iσ11H10 = iD10 + σ11B̃10", e3a),
        ("identity for H11 and the antisymmetric part of K11", e3b),
        ("identity σ11(iH11 + K11/2)σ11", e3c),
        ("finite-difference linear coefficients", fd_linear),
        ("finite-difference quadratic coefficients", fd_quadratic),
        ("Lindblad-form linear coefficients", lind_lin),
        ("Lindblad-form quadratic coefficients", lind_quad),
    ] {
        if v.is_nan() || v > tol_fd {
            return Err(Error::Assembly { which: which.into(), defect: v });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockSample {
    pub t: f64,
    pub d0: usize,
    pub d1: usize,
    pub k11_min_eig: f64,
    pub k11_max_eig: f64,
    pub correction_trace: f64,
}

/// Split dimensions and K11 spectrum along a trajectory; entries whose split is rank-ambiguous
/// are reported as errors rather than interpolated.
pub fn blocks_along(model: &Model, traj: &MacroTrajectory) -> Vec<(f64, Result<BlockSample>)> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, w)| {
            let r = blocks_at(model, w).map(|(_, b)| {
                let ev = b.k11_eigenvalues();
                BlockSample {
                    t,
                    d0: b.d0,
                    d1: b.d1,
                    k11_min_eig: ev.first().copied().unwrap_or(0.0),
                    k11_max_eig: ev.last().copied().unwrap_or(0.0),
                    correction_trace: linalg::trace(&b.k11_correction).norm(),
                }
            });
            (t, r)
        })
        .collect()
}

/// Times at which the kernel dimension changes between consecutive grid points.
pub fn kernel_jumps(samples: &[(f64, Result<BlockSample>)]) -> Vec<(f64, usize, usize)> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for (t, s) in samples {
        if let Ok(s) = s {
            if let Some(p) = prev {
                if p != s.d0 {
                    out.push((*t, p, s.d0));
                }
            }
            prev = Some(s.d0);
        }
    }
    out
}
