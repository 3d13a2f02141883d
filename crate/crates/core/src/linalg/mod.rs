//! Dense matrices and solvers for square roots of symmetric positive-definite
//! matrices.
//!
//! Two iterative solvers produce the pair `(A^{1/2}, A^{-1/2})`:
//! [`spd_sqrt_db`] (coupled Denman-Beavers, needs inverses) and
//! [`spd_sqrt_ns`] (coupled Newton-Schulz, multiplications only). A cyclic
//! Jacobi eigendecomposition backs the slow reference [`spd_sqrt_eig_oracle`].

mod decomp;
mod matrix;
mod sqrt;

pub use decomp::{cholesky, inverse, jacobi_eigen, solve, SymmetricEigen};
pub use matrix::{damp, matmul, Matrix};
pub use sqrt::{
    random_spd, relative_residual, spd_sqrt, spd_sqrt_db, spd_sqrt_eig_oracle, spd_sqrt_ns,
    SqrtMethod, SqrtResult, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

use thiserror::Error;

/// Pivot magnitude below which an elimination step is declared singular.
pub const PIVOT_EPS: f64 = 1e-14;

/// Relative asymmetry tolerated by the SPD routines.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (eigenvalue or pivot {value:e})")]
    NotPositiveDefinite { value: f64 },
    #[error("singular matrix: pivot {pivot:e} at column {column}")]
    Singular { pivot: f64, column: usize },
    #[error("singular iterate at iteration {iteration}: pivot {pivot:e}")]
    SingularIterate { iteration: usize, pivot: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iteration diverged at iteration {iteration} (residual {residual:e})")]
    Divergence { iteration: usize, residual: f64 },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl LinalgError {
    pub(crate) fn dims(op: &'static str, a: &Matrix, b: &Matrix) -> Self {
        LinalgError::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        }
    }

    /// True for failures of an iterative solver to reach its tolerance.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            LinalgError::NoConvergence { .. }
                | LinalgError::Divergence { .. }
                | LinalgError::SingularIterate { .. }
        )
    }
}

pub(crate) fn ensure_square(a: &Matrix) -> Result<(), LinalgError> {
    if a.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        })
    }
}

pub(crate) fn ensure_symmetric(a: &Matrix) -> Result<(), LinalgError> {
    ensure_square(a)?;
    if !a.is_finite() {
        return Err(LinalgError::NonFinite("input matrix"));
    }
    let asymmetry = a.asymmetry();
    if asymmetry > SYMMETRY_TOL {
        return Err(LinalgError::NotSymmetric { asymmetry });
    }
    Ok(())
}
