//! Small dense linear-algebra helpers shared by the flow modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn re(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn im(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn max_abs_im(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.im.abs()))
}

pub fn max_abs_re(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.re.abs()))
}

pub fn frob(m: &CMat) -> f64 {
    m.iter().map(num_complex::Complex::norm_sqr).sum::<f64>().sqrt()
}

pub fn frob_r(m: &RMat) -> f64 {
    m.norm()
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    frob(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of the hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = hermitian_part(m);
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn hermitian_min_eig(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitian_eigenvalues(m)[0]
}

pub fn spectral_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &s| a.max(s))
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Embeds a single-site operator at site `k` of a chain segment of `s` sites: 1 ⊗ … ⊗ op ⊗ … ⊗ 1.
pub fn embed(op: &CMat, k: usize, s: usize) -> CMat {
    let d = op.nrows();
    let left = identity(d.pow(k as u32));
    let right = identity(d.pow((s - k - 1) as u32));
    kron(&kron(&left, op), &right)
}

pub fn tensor_power(op: &CMat, s: usize) -> CMat {
    let mut out = identity(1);
    for _ in 0..s {
        out = kron(&out, op);
    }
    out
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Tr(a b) without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn pack_real(m: &RMat, out: &mut [f64]) {
    out.copy_from_slice(m.as_slice());
}

pub fn unpack_real(data: &[f64], n: usize, m: usize) -> RMat {
    RMat::from_column_slice(n, m, data)
}

pub fn pack_complex(m: &CMat, out: &mut [f64]) {
    for (k, z) in m.iter().enumerate() {
        out[2 * k] = z.re;
        out[2 * k + 1] = z.im;
    }
}

pub fn unpack_complex(data: &[f64], n: usize, m: usize) -> CMat {
    CMat::from_iterator(
        n,
        m,
        data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])),
    )
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for deg in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn embed_places_operator_at_site() {
        let z = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let e = embed(&z, 1, 3);
        assert_eq!(e.nrows(), 8);
        for i in 0..8 {
            let bit = (i >> 1) & 1;
            let expect = if bit == 0 { 1.0 } else { -1.0 };
            assert_eq!(e[(i, i)].re, expect);
        }
    }

    #[test]
    fn pack_roundtrip() {
        let m = CMat::from_fn(3, 2, |i, j| Complex64::new(i as f64, j as f64 - 0.5));
        let mut buf = vec![0.0; 12];
        pack_complex(&m, &mut buf);
        assert_eq!(unpack_complex(&buf, 3, 2), m);
    }
}
