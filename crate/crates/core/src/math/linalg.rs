use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{CoreError, Result};

/// Tolerance for the symmetry check performed before factorization.
const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(CoreError::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(CoreError::NotPositiveDefinite);
            }
        }
    }
    a.clone().cholesky().ok_or(CoreError::NotPositiveDefinite)
}

/// Solves `A X = B` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != a.nrows() {
        return Err(CoreError::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
    }
    let chol = cholesky(a)?;
    Ok(chol.solve(b))
}

pub fn solve_spd_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.nrows() != a.nrows() {
        return Err(CoreError::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
    }
    let chol = cholesky(a)?;
    Ok(chol.solve(b))
}
