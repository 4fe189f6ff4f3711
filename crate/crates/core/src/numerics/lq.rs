use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use super::{dot_conj_right, vec_norm_sqr, Complex, ComplexMatrix, LinalgError, PIVOT_TOLERANCE};

/// `H = L Q` with `L` lower triangular (real positive diagonal) and `Q`
/// having orthonormal rows.
#[derive(Clone, Debug)]
pub struct Lq {
    pub l: ComplexMatrix,
    pub q: ComplexMatrix,
}

/// LQ factorization of a wide (or square) full-row-rank matrix.
///
/// Rows are orthogonalised in order by classical Gram-Schmidt with one full
/// reorthogonalisation pass, which keeps `Q Q^H - I` at rounding level for
/// the sizes used here. The diagonal of `L` is the residual norm and hence
/// real and positive by construction.
pub fn lq_decompose(h: &ComplexMatrix) -> Result<Lq, LinalgError> {
    let (m, n) = h.shape();
    if m > n {
        return Err(LinalgError::DimensionMismatch { op: "lq_decompose", left: (m, n), right: (n, n) });
    }
    let tol = PIVOT_TOLERANCE * h.frobenius_norm();
    let mut l = ComplexMatrix::zeros(m, m);
    let mut q_rows: Vec<Vec<Complex>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut v = h.row(i).to_vec();
        for _pass in 0..2 {
            for (j, qj) in q_rows.iter().enumerate() {
                let coef = dot_conj_right(&v, qj);
                l[(i, j)] += coef;
                for (x, y) in v.iter_mut().zip(qj) {
                    *x -= coef * y;
                }
            }
        }
        let norm = vec_norm_sqr(&v).sqrt();
        if !(norm > tol) {
            return Err(LinalgError::RankDeficient { row: i, value: norm });
        }
        l[(i, i)] = Complex::new(norm, 0.0);
        let inv = 1.0 / norm;
        v.iter_mut().for_each(|z| *z *= inv);
        q_rows.push(v);
    }
    let q = ComplexMatrix::from_vec_unchecked(m, n, q_rows.into_iter().flatten().collect());
    Ok(Lq { l, q })
}
