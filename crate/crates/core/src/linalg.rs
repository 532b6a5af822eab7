//! Dense linear algebra helpers backed by nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest singular value (induced 2-norm).
pub fn spectral_norm(mat: &DMatrix<f64>) -> Result<f64> {
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral_norm input"));
    }
    if mat.is_empty() {
        return Ok(0.0);
    }
    if mat.nrows() == 1 || mat.ncols() == 1 {
        return Ok(mat.norm());
    }
    let sv = mat.clone().singular_values();
    Ok(sv.iter().copied().fold(0.0, f64::max))
}

/// Largest eigenvalue modulus of a square matrix, via a real Schur form.
///
/// Random sparse reservoirs usually have a complex-conjugate dominant pair,
/// where plain power iteration oscillates instead of converging.
pub fn spectral_radius(mat: &DMatrix<f64>) -> Result<f64> {
    if !mat.is_square() {
        return Err(Error::DimensionMismatch {
            what: "spectral_radius (square matrix)",
            expected: mat.nrows(),
            got: mat.ncols(),
        });
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral_radius input"));
    }
    if mat.is_empty() {
        return Ok(0.0);
    }
    let schur = nalgebra::Schur::try_new(mat.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Row `j` of `mat` as an owned vector.
pub(crate) fn row(mat: &DMatrix<f64>, j: usize) -> DVector<f64> {
    mat.row(j).transpose()
}
