//! Dense complex linear-algebra helpers shared by the simulator modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

/// Eigenvalues above this (negative) floor are treated as round-off and clipped to zero.
pub const EIGEN_FLOOR: f64 = -1e-10;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Unit-modulus phasor `e^{j theta}`.
pub fn cis(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// Wraps an angle to `[-pi, pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = (theta + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if t >= std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

/// One draw of `CN(0, 1)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng))
}

/// `(M + M^H) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Hermitian eigendecomposition with eigenvalues clipped at zero.
/// Returns `(eigenvalues, eigenvectors)`.
fn clipped_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitize(m).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let values = eig
        .eigenvalues
        .iter()
        .map(|&v| {
            if v < EIGEN_FLOOR * scale.max(1.0) {
                log::warn!("eigenvalue {v:e} below PSD floor, clipping");
            }
            v.max(0.0)
        })
        .collect();
    (values, eig.eigenvectors)
}

/// Projects a (nearly) Hermitian matrix onto the PSD cone.
pub fn psd_clip(m: &CMat) -> CMat {
    let (values, vectors) = clipped_eigen(m);
    let n = m.nrows();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= v;
        }
    }
    hermitize(&(scaled * vectors.adjoint()))
}

/// A factor `F` with `F F^H = M` for a Hermitian PSD `M`. Works for rank-deficient input.
pub fn psd_factor(m: &CMat) -> CMat {
    let (values, mut vectors) = clipped_eigen(m);
    let n = m.nrows();
    for (j, &v) in values.iter().enumerate() {
        let s = v.sqrt();
        for i in 0..n {
            vectors[(i, j)] *= s;
        }
    }
    vectors
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solves `A X = B` for Hermitian positive-definite `A` via Cholesky. If the factorization
/// fails, a diagonal jitter of `1e-12` relative to the mean diagonal is added and retried.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    if let Some(ch) = hermitize(a).cholesky() {
        return Ok(ch.solve(b));
    }
    let n = a.nrows();
    let mean_diag = (0..n).map(|i| a[(i, i)].re.abs()).sum::<f64>() / n.max(1) as f64;
    let mut jitter = 1e-12 * mean_diag.max(f64::MIN_POSITIVE);
    for _ in 0..6 {
        let mut shifted = hermitize(a);
        for i in 0..n {
            shifted[(i, i)] += c(jitter, 0.0);
        }
        if let Some(ch) = shifted.cholesky() {
            log::debug!("hermitian_solve needed jitter {jitter:e}");
            return Ok(ch.solve(b));
        }
        jitter *= 100.0;
    }
    Err(Error::NotPositiveDefinite)
}

pub fn hermitian_solve_vec(a: &CMat, b: &CVec) -> Result<CVec> {
    let rhs = CMat::from_column_slice(b.len(), 1, b.as_slice());
    let x = hermitian_solve(a, &rhs)?;
    Ok(CVec::from_column_slice(x.as_slice()))
}

/// `‖A - B‖_F / ‖B‖_F`; falls back to the absolute distance when `B` vanishes.
pub fn frobenius_rel(a: &CMat, b: &CMat) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// Assembles a block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let m = b.nrows();
        out.view_mut((off, off), (m, m)).copy_from(b);
        off += m;
    }
    out
}

/// Stacks vectors on top of each other.
pub fn stack(parts: &[CVec]) -> CVec {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = CVec::zeros(n);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

/// Real-valued `n x n` matrix lifted to complex.
pub fn real_to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|v| c(v, 0.0))
}
