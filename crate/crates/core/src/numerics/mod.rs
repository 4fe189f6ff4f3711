//! Dense complex linear algebra used by every precoder and detector.
//!
//! Inverses are never formed for their own sake: everything goes through a
//! Cholesky factorization and triangular solves. Explicit inverses are only
//! built (column by column from solves) when the matrix itself is the
//! deliverable, e.g. a precoder.

mod cholesky;
mod lq;
mod matrix;
mod svd;

pub use cholesky::{logdet2_hpd, solve_hpd, Cholesky};
pub use lq::{lq_decompose, Lq};
pub use matrix::{dot, dot_conj_right, vec_norm_sqr, ComplexMatrix};
pub use svd::{svd, Svd};

pub type Complex = num_complex::Complex64;

/// Relative pivot tolerance shared by the factorizations.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix shape {rows}x{cols} does not fit {len} entries")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("singular matrix: non-positive pivot {value:e} at index {pivot}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("rank-deficient matrix: pivot {value:e} at row {row} below tolerance")]
    RankDeficient { row: usize, value: f64 },
    #[error("SVD did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

#[inline]
pub fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}
