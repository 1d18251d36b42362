//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::{Error, Matrix, Result, Vector};

/// Spectral norm (largest singular value).
pub fn op_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Symmetrize and eigendecompose; returns an error on non-finite input.
fn sym_eigen(m: &Matrix) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    let s = (m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(s))
}

/// Whether a symmetric matrix is positive semidefinite up to a relative tolerance.
pub fn is_psd(m: &Matrix) -> bool {
    if !m.is_square() {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let asym = (m - m.transpose()).amax();
    let scale = m.amax().max(1e-300);
    if asym > 1e-9 * scale {
        return false;
    }
    match sym_eigen(m) {
        Ok(e) => e.eigenvalues.iter().all(|&l| l >= -1e-10 * scale),
        Err(_) => false,
    }
}

/// Symmetric PSD square root. Slightly negative eigenvalues are clamped to zero.
pub fn sym_sqrt(m: &Matrix) -> Result<Matrix> {
    let e = sym_eigen(m)?;
    let d = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&e.eigenvectors * Matrix::from_diagonal(&d) * e.eigenvectors.transpose())
}

/// Inverse symmetric square root of a positive definite matrix.
pub fn sym_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    let e = sym_eigen(m)?;
    if e.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Numeric("inverse square root of a singular matrix".into()));
    }
    let d = e.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&e.eigenvectors * Matrix::from_diagonal(&d) * e.eigenvectors.transpose())
}

pub fn cholesky(m: &Matrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))
}

/// log det of a positive definite matrix through its Cholesky factor.
pub fn logdet_spd(m: &Matrix) -> Result<f64> {
    let c = cholesky(m)?;
    Ok(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Ridge solution `X = B (G + lambda I)^{-1}` for a symmetric PSD `G`.
pub fn ridge_right_solve(rhs: &Matrix, gram: &Matrix, lambda: f64) -> Result<Matrix> {
    let n = gram.nrows();
    let reg = gram + Matrix::identity(n, n) * lambda;
    let c = cholesky(&reg)?;
    // X reg = rhs  <=>  reg X^T = rhs^T
    Ok(c.solve(&rhs.transpose()).transpose())
}

/// Euclidean projection onto the centered ball of the given radius.
pub fn project_ball(v: &Vector, radius: f64) -> Vector {
    let n = v.norm();
    if n <= radius {
        v.clone()
    } else {
        v * (radius / n)
    }
}

/// Kronecker product `I_k ⊗ block`.
pub fn block_diag_repeat(block: &Matrix, k: usize) -> Matrix {
    let (r, c) = block.shape();
    let mut out = Matrix::zeros(r * k, c * k);
    for i in 0..k {
        out.view_mut((i * r, i * c), (r, c)).copy_from(block);
    }
    out
}

/// Matrix from row-major nested arrays.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Row-major nested arrays from a matrix.
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_and_inv_sqrt_round_trip() {
        let m = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sym_sqrt(&m).unwrap();
        assert!((&s * &s - &m).amax() < 1e-12);
        let is = sym_inv_sqrt(&m).unwrap();
        assert!((&is * &m * &is - Matrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn psd_detection() {
        assert!(is_psd(&Matrix::zeros(2, 2)));
        assert!(!is_psd(&Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])));
        assert!(!is_psd(&Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])));
    }

    #[test]
    fn ridge_scalar() {
        let x = ridge_right_solve(&Matrix::from_element(1, 1, 3.0), &Matrix::from_element(1, 1, 1.0), 1.0).unwrap();
        assert!((x[(0, 0)] - 1.5).abs() < 1e-15);
    }
}
