//! Single-site operator basis, structure constants and the coefficient
//! matrices derived from a mean-field Lindblad model.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat, I, ONE, ZERO};
use crate::tolerances::Tolerances;

/// Microscopic model (d, ε, h, C). Couplings refer to the orthonormal basis of [`build_basis`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub d: usize,
    pub eps: Vec<Complex64>,
    pub h: CMat,
    pub c: CMat,
}

impl ModelSpec {
    pub fn new(d: usize, eps: &[f64], h: CMat, c: CMat) -> Self {
        Self {
            d,
            eps: eps.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            h,
            c,
        }
    }

    pub fn n(&self) -> usize {
        self.d * self.d
    }

    pub fn eps_re(&self) -> Vec<f64> {
        self.eps.iter().map(|z| z.re).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    pub d: usize,
    pub v: Vec<CMat>,
}

impl BasisSet {
    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn identity_index(&self) -> usize {
        self.v.len() - 1
    }

    pub fn gram(&self) -> CMat {
        let n = self.n();
        CMat::from_fn(n, n, |a, b| linalg::trace_product(&self.v[a], &self.v[b]))
    }

    /// ρ(ω) = Σ ω_μ v_μ.
    pub fn rho(&self, omega: &[f64]) -> CMat {
        let d = self.d;
        let mut r = CMat::zeros(d, d);
        for (w, v) in omega.iter().zip(&self.v) {
            r += v.scale(*w);
        }
        r
    }

    /// ω_μ = Tr(ρ v_μ).
    pub fn omega(&self, rho: &CMat) -> Vec<f64> {
        self.v.iter().map(|v| linalg::trace_product(rho, v).re).collect()
    }

    /// Σ_μ c_μ v_μ for complex coefficients.
    pub fn combine(&self, coeffs: &[Complex64]) -> CMat {
        let d = self.d;
        let mut r = CMat::zeros(d, d);
        for (c, v) in coeffs.iter().zip(&self.v) {
            if *c != ZERO {
                r += v * *c;
            }
        }
        r
    }

    pub fn combine_real(&self, coeffs: &[f64]) -> CMat {
        self.rho(coeffs)
    }
}

/// Generalized Gell-Mann basis with Tr(v_μ v_ν) = δ_μν, ordered as symmetric
/// off-diagonal, antisymmetric off-diagonal, diagonal traceless, identity/√d.
pub fn build_basis(d: usize) -> Result<BasisSet> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut sym = Vec::new();
    let mut asym = Vec::new();
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = Complex64::new(s, 0.0);
            m[(k, j)] = Complex64::new(s, 0.0);
            sym.push(m);
            let mut m = CMat::zeros(d, d);
            m[(j, k)] = Complex64::new(0.0, -s);
            m[(k, j)] = Complex64::new(0.0, s);
            asym.push(m);
        }
    }
    let mut v = sym;
    v.extend(asym);
    for l in 1..d {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut m = CMat::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = Complex64::new(norm, 0.0);
        }
        m[(l, l)] = Complex64::new(-(l as f64) * norm, 0.0);
        v.push(m);
    }
    v.push(CMat::identity(d, d).scale(1.0 / (d as f64).sqrt()));
    Ok(BasisSet { d, v })
}

/// Basis invariants: hermiticity and orthonormality defects.
pub fn basis_defects(basis: &BasisSet) -> (f64, f64) {
    let herm = basis
        .v
        .iter()
        .map(linalg::hermiticity_defect)
        .fold(0.0, f64::max);
    let n = basis.n();
    let gram = basis.gram();
    let ortho = linalg::frob(&(gram - CMat::identity(n, n)));
    (herm, ortho)
}

/// J^γ_{αβ} = Tr([v_α, v_β] v_γ), purely imaginary.
#[derive(Debug, Clone)]
pub struct StructureTensor {
    pub n: usize,
    data: Vec<Complex64>,
    imag: Vec<f64>,
}

impl StructureTensor {
    #[inline]
    fn idx(&self, g: usize, a: usize, b: usize) -> usize {
        (g * self.n + a) * self.n + b
    }

    #[inline]
    pub fn get(&self, g: usize, a: usize, b: usize) -> Complex64 {
        self.data[self.idx(g, a, b)]
    }

    /// Im J^γ_{αβ}; J = i · im.
    #[inline]
    pub fn im(&self, g: usize, a: usize, b: usize) -> f64 {
        self.imag[self.idx(g, a, b)]
    }

    /// Largest |Re J|, zero for a hermitian basis.
    pub fn real_residue(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.re.abs()))
    }

    /// Σ_γ x_γ Im J^γ, an antisymmetric real matrix.
    pub fn contract_im(&self, x: &[f64]) -> RMat {
        let n = self.n;
        let mut m = RMat::zeros(n, n);
        for (g, &xg) in x.iter().enumerate() {
            if xg == 0.0 {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += xg * self.im(g, a, b);
                }
            }
        }
        m
    }

    /// Σ_γ x_γ J^γ for complex coefficients.
    pub fn contract(&self, x: &[Complex64]) -> CMat {
        let n = self.n;
        let mut m = CMat::zeros(n, n);
        for (g, &xg) in x.iter().enumerate() {
            if xg == ZERO {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += xg * self.get(g, a, b);
                }
            }
        }
        m
    }
}

pub fn structure_tensor(basis: &BasisSet) -> StructureTensor {
    let n = basis.n();
    let mut data = vec![ZERO; n * n * n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let comm = linalg::commutator(&basis.v[a], &basis.v[b]);
            for g in 0..n {
                data[(g * n + a) * n + b] = linalg::trace_product(&comm, &basis.v[g]);
            }
        }
    }
    let imag = data.iter().map(|z| z.im).collect();
    StructureTensor { n, data, imag }
}

/// A, B, Ã, B̃, h^(re), h^(im) and the iℰ matrix.
#[derive(Debug, Clone)]
pub struct DerivedCoefficients {
    pub a: CMat,
    pub b: CMat,
    pub hre: RMat,
    pub him: RMat,
    pub atilde: RMat,
    pub btilde: CMat,
    /// iℰ with ℰ_{αβ} = Σ_μ ε_μ J^μ_{αβ}; ℰ is imaginary, so this holds the real matrix iℰ.
    pub ie: RMat,
    /// Re A (A is real symmetric)
    pub a_re: RMat,
    /// Im B (B = i · b_im)
    pub b_im: RMat,
    /// Im B̃ (B̃ = i · btilde_im)
    pub btilde_im: RMat,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub dimension_ok: bool,
    pub dimension_message: Option<String>,
    pub h_hermiticity_defect: f64,
    pub c_hermiticity_defect: f64,
    pub c_min_eig: f64,
    pub c_eigenvalues: Vec<f64>,
    pub eps_realness_defect: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn violations(&self, tol: &Tolerances) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(m) = &self.dimension_message {
            v.push(m.clone());
        }
        if self.h_hermiticity_defect > tol.alg {
            v.push(format!("h not hermitian (defect {:.3e})", self.h_hermiticity_defect));
        }
        if self.c_hermiticity_defect > tol.alg {
            v.push(format!("C not hermitian (defect {:.3e})", self.c_hermiticity_defect));
        }
        if self.c_min_eig < -tol.psd {
            v.push(format!("C not positive semi-definite (min eigenvalue {:.3e})", self.c_min_eig));
        }
        if self.eps_realness_defect > tol.alg {
            v.push(format!("eps not real (defect {:.3e})", self.eps_realness_defect));
        }
        v
    }
}

pub fn validate_model(spec: &ModelSpec, tol: &Tolerances) -> ValidationReport {
    let n = spec.d * spec.d;
    let mut msg = None;
    if spec.d < 2 {
        msg = Some(format!("site dimension {} < 2", spec.d));
    } else if spec.eps.len() != n
        || spec.h.shape() != (n, n)
        || spec.c.shape() != (n, n)
    {
        msg = Some(format!(
            "expected eps of length {n} and {n}x{n} matrices, got eps {}, h {:?}, C {:?}",
            spec.eps.len(),
            spec.h.shape(),
            spec.c.shape()
        ));
    }
    if msg.is_some() {
        return ValidationReport {
            dimension_ok: false,
            dimension_message: msg,
            h_hermiticity_defect: f64::NAN,
            c_hermiticity_defect: f64::NAN,
            c_min_eig: f64::NAN,
            c_eigenvalues: Vec::new(),
            eps_realness_defect: f64::NAN,
            passed: false,
        };
    }
    let h_def = linalg::hermiticity_defect(&spec.h);
    let c_def = linalg::hermiticity_defect(&spec.c);
    let c_eigs = linalg::hermitian_eigenvalues(&spec.c);
    let eps_def = spec.eps.iter().fold(0.0, |m: f64, z| m.max(z.im.abs()));
    let mut report = ValidationReport {
        dimension_ok: true,
        dimension_message: None,
        h_hermiticity_defect: h_def,
        c_hermiticity_defect: c_def,
        c_min_eig: c_eigs[0],
        c_eigenvalues: c_eigs,
        eps_realness_defect: eps_def,
        passed: false,
    };
    report.passed = report.violations(tol).is_empty();
    report
}

pub fn derive_coefficients(
    spec: &ModelSpec,
    j: &StructureTensor,
    tol: &Tolerances,
) -> Result<DerivedCoefficients> {
    let report = validate_model(spec, tol);
    if !report.passed {
        return Err(Error::InvalidModel(report.violations(tol).join("; ")));
    }
    let n = spec.n();
    if j.n != n {
        return Err(Error::DimensionMismatch { expected: n, got: j.n });
    }
    let ct = spec.c.transpose();
    let a = (&spec.c + &ct).scale(0.5);
    let b = (&spec.c - &ct).scale(0.5);
    let hre = linalg::re(&spec.h);
    let him = linalg::im(&spec.h);
    let atilde_c = &a - linalg::to_complex(&him).scale(2.0);
    let btilde = &b + linalg::to_complex(&hre) * (I * 2.0);
    let imag_atilde = linalg::max_abs_im(&atilde_c);
    if imag_atilde > tol.alg * (1.0 + linalg::frob(&spec.c)) {
        return Err(Error::Consistency { what: "Atilde", residue: imag_atilde });
    }
    let real_btilde = linalg::max_abs_re(&btilde);
    if real_btilde > tol.alg * (1.0 + linalg::frob(&spec.c) + linalg::frob(&spec.h)) {
        return Err(Error::Consistency { what: "Btilde", residue: real_btilde });
    }
    let eps: Vec<f64> = spec.eps_re();
    // ℰ = i · Σ ε_μ Im J^μ, hence iℰ = −Σ ε_μ Im J^μ
    let ie = -j.contract_im(&eps);
    Ok(DerivedCoefficients {
        a_re: linalg::re(&a),
        b_im: linalg::im(&b),
        btilde_im: linalg::im(&btilde),
        atilde: linalg::re(&atilde_c),
        a,
        b,
        hre,
        him,
        btilde,
        ie,
        eps,
    })
}

/// A model together with its basis, structure tensor, coefficients and tolerances.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub basis: BasisSet,
    pub j: StructureTensor,
    pub coeffs: DerivedCoefficients,
    pub tol: Tolerances,
}

impl Model {
    pub fn new(spec: ModelSpec, tol: Tolerances) -> Result<Self> {
        let basis = build_basis(spec.d)?;
        let j = structure_tensor(&basis);
        let coeffs = derive_coefficients(&spec, &j, &tol)?;
        Ok(Self { spec, basis, j, coeffs, tol })
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// Single-site operator Σ_μ x_μ v_μ for real x.
    pub fn site_operator(&self, x: &[f64]) -> CMat {
        self.basis.combine_real(x)
    }

    /// Single-site state check of ρ(ω): hermitian, unit trace, PSD.
    pub fn check_state(&self, omega: &[f64]) -> Result<()> {
        let n = self.n();
        if omega.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: omega.len() });
        }
        let rho = self.basis.rho(omega);
        let tr = linalg::trace(&rho);
        if (tr - ONE).norm() > 1e-8 {
            return Err(Error::InvalidState(format!("Tr ρ(ω) = {tr}, expected 1")));
        }
        let min = linalg::hermitian_min_eig(&rho);
        if min < -self.tol.psd {
            return Err(Error::InvalidState(format!(
                "ρ(ω) not positive semi-definite (min eigenvalue {min:.3e})"
            )));
        }
        let k: f64 = omega.iter().map(|w| w * w).sum();
        if k > (self.d() * self.d()) as f64 {
            return Err(Error::InvalidState(format!("Σ ω² = {k} exceeds d²")));
        }
        Ok(())
    }
}
