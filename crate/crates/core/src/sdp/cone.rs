//! PSD cone utilities: the complex-to-real embedding and eigenvalue-clamping
//! projections.

use faer::{Mat, Side};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Error, Result};
use crate::model::{CMatrix, C64};

pub const HERMITIAN_TOL: f64 = 1e-10;

fn hermitian_defect(h: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..h.nrows() {
        for j in i..h.ncols() {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `[[Re H, -Im H], [Im H, Re H]]`. `H` is PSD iff the embedding is, and each
/// eigenvalue of `H` shows up twice in the embedding.
pub fn realify(h: &CMatrix) -> Result<DMatrix<f64>> {
    if !h.is_square() {
        return domain("realify needs a square matrix");
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if hermitian_defect(h) > HERMITIAN_TOL * scale {
        return domain("realify input is not Hermitian");
    }
    let n = h.nrows();
    Ok(DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    }))
}

/// Inverse of [`realify`] on its range: reads the top-left and bottom-left
/// quarters.
pub fn complexify(r: &DMatrix<f64>) -> CMatrix {
    let n = r.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| C64::new(r[(i, j)], r[(i + n, j)]))
}

/// Frobenius projection of a real symmetric matrix onto the PSD cone.
pub fn psd_project(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return domain("psd_project needs a square matrix");
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Solver("symmetric eigendecomposition did not converge".into()))?;
    let mut v = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let w = lam.max(0.0).sqrt();
        v.column_mut(j).scale_mut(w);
    }
    Ok(&v * v.transpose())
}

fn to_faer(h: &CMatrix) -> Mat<C64> {
    Mat::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)])
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub(crate) fn hermitian_eigen(h: &CMatrix) -> Result<(Vec<f64>, Mat<C64>)> {
    let evd = to_faer(h)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("hermitian eigendecomposition failed: {e:?}")))?;
    let vals = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn hermitian_min_eigenvalue(h: &CMatrix) -> Result<f64> {
    let vals = to_faer(h)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Solver(format!("hermitian eigenvalues failed: {e:?}")))?;
    Ok(vals.first().copied().unwrap_or(0.0))
}

/// Frobenius projection of a Hermitian matrix onto the PSD cone, computed in
/// complex arithmetic. Equals `complexify(psd_project(realify(h)))`.
pub fn hermitian_psd_project(h: &CMatrix) -> Result<CMatrix> {
    let n = h.nrows();
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let (vals, u) = hermitian_eigen(&sym)?;
    let keep: Vec<usize> = (0..n).filter(|&j| vals[j] > 0.0).collect();
    if keep.is_empty() {
        return Ok(CMatrix::zeros(n, n));
    }
    if keep.len() == n {
        return Ok(sym);
    }
    let v = Mat::from_fn(n, keep.len(), |i, c| u[(i, keep[c])] * vals[keep[c]].sqrt());
    let p = &v * v.adjoint();
    Ok(CMatrix::from_fn(n, n, |i, j| p[(i, j)]))
}
