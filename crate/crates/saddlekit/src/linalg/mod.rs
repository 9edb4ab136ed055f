//! Sparse and dense symmetric linear algebra used by assembly, factorization,
//! and the Krylov solvers.

mod csr;
mod dense;
mod eigen;
mod matrix_market;
mod sparse_cholesky;

pub use csr::{CooBuilder, CsrMatrix};
pub use dense::{DenseMatrix, SymmetricIndefiniteFactor};
pub use eigen::{gen_sym_eig, spd_interpolate, sym_eig};
pub use matrix_market::{read_symmetric_matrix_market, write_symmetric_matrix_market};
pub use sparse_cholesky::{cholesky, CholeskyFactor, Ordering};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite: non-positive pivot at index {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix is singular at elimination step {step}")]
    Singular { step: usize },
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("eigensolver did not converge within {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("interpolation parameter theta={0} outside [0, 1]")]
    ThetaOutOfRange(f64),
    #[error("problem size {size} exceeds cap {cap} for {context}")]
    SizeCap { size: usize, cap: usize, context: &'static str },
    #[error("non-finite entry encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("MatrixMarket parse error on line {line}: {message}")]
    MatrixMarket { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Contiguous numeric vector.
pub type Vector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

/// Boundary check: numeric containers must not carry NaN or infinities.
pub fn ensure_finite(v: &[f64], context: &'static str) -> Result<(), LinalgError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite { context })
    }
}
