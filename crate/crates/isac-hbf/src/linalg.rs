//! Small dense complex linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

/// Frobenius inner product real part: Re Tr(A^H B) = Re sum conj(a_ij) b_ij.
pub fn inner_re(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x.conj() * y).re)
        .sum()
}

/// Squared Frobenius norm of a complex matrix.
pub fn fro_norm_sq(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Column-major vectorization vec(M).
pub fn vec_cols(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_cols`]: reshape a length r*c vector into an r x c matrix.
pub fn unvec_cols(v: &DVector<Complex64>, rows: usize, cols: usize) -> DMatrix<Complex64> {
    debug_assert_eq!(v.len(), rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Largest eigenvalue of a Hermitian positive semidefinite matrix by power
/// iteration: fixed deterministic start, `max_iters` rounds or relative
/// Rayleigh-quotient change below `tol`.
pub fn lambda_max_psd(m: &DMatrix<Complex64>, max_iters: usize, tol: f64) -> f64 {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    if n == 0 {
        return 0.0;
    }
    // Deterministic start with unequal entries so no eigenvector is exactly
    // orthogonal to it for generic matrices.
    let mut v = DVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.01 * i as f64, 0.0));
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0_f64;
    for _ in 0..max_iters {
        let w = m * &v;
        let norm = w.norm();
        if norm <= f64::MIN_POSITIVE {
            return 0.0;
        }
        let next = v.dotc(&w).re;
        v = w / Complex64::new(norm, 0.0);
        if (next - lambda).abs() <= tol * next.abs().max(1.0) {
            return next.max(0.0);
        }
        lambda = next;
    }
    lambda.max(0.0)
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues and a unitary
/// eigenvector matrix, via nalgebra's symmetric eigensolver.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> HermitianEigen {
    let se = nalgebra::SymmetricEigen::new(m.clone());
    HermitianEigen {
        eigenvalues: se.eigenvalues,
        eigenvectors: se.eigenvectors,
    }
}

/// Standard complex Gaussian draw, CN(0, 1): independent real and imaginary
/// parts with variance 1/2 each.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let dist = rand_distr::StandardNormal;
    let re: f64 = rng.sample(dist);
    let im: f64 = rng.sample(dist);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Deterministic substream derivation: mixes a master seed with a tag so each
/// (purpose, index) pair gets an independent, platform-stable seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
