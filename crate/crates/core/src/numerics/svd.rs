use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use super::{dot_conj_right, vec_norm_sqr, Complex, ComplexMatrix, LinalgError};

const MAX_SWEEPS: usize = 60;
const ORTHOGONALITY_TOLERANCE: f64 = 1e-15;

/// Thin SVD `M = U diag(S) Vh` with `k = min(rows, cols)` singular values in
/// nonincreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub vh: ComplexMatrix,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(m: &ComplexMatrix) -> Result<Svd, LinalgError> {
    let (rows, cols) = m.shape();
    if rows >= cols {
        let (u, s, v) = jacobi_tall(m)?;
        Ok(Svd { u, singular_values: s, vh: v.hermitian() })
    } else {
        // M^H = U' S V'^H  =>  M = V' S U'^H
        let (u, s, v) = jacobi_tall(&m.hermitian())?;
        Ok(Svd { u: v, singular_values: s, vh: u.hermitian() })
    }
}

/// Orthogonalises the columns of a tall matrix; returns `(U, S, V)`.
fn jacobi_tall(a: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix), LinalgError> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<Complex>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<Complex>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex::new(0.0, 0.0); n];
            e[j] = Complex::new(1.0, 0.0);
            e
        })
        .collect();

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = vec_norm_sqr(&cols[p]);
                let beta = vec_norm_sqr(&cols[q]);
                let gamma = dot_conj_right(&cols[q], &cols[p]); // a_p^H a_q
                let g = gamma.norm();
                if g == 0.0 || g <= ORTHOGONALITY_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut cols, p, q, cs, sn, phase);
                rotate(&mut v, p, q, cs, sn, phase);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<(usize, f64)> = cols.iter().map(|c| vec_norm_sqr(c).sqrt()).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let smax = order.first().map_or(0.0, |o| o.1);
    let tiny = smax * f64::EPSILON * (m.max(n) as f64);
    let mut u_cols: Vec<Vec<Complex>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for &(j, sigma) in &order {
        if sigma > tiny && sigma > 0.0 {
            let inv = 1.0 / sigma;
            u_cols.push(cols[j].iter().map(|z| z * inv).collect());
            s.push(sigma);
        } else {
            deficient.push(u_cols.len());
            u_cols.push(Vec::new());
            s.push(0.0);
        }
        v_cols.push(v[j].clone());
    }
    complete_orthonormal(&mut u_cols, &deficient, m);

    let u = ComplexMatrix::from_fn(m, n, |i, j| u_cols[j][i]);
    let vm = ComplexMatrix::from_fn(n, n, |i, j| v_cols[j][i]);
    Ok((u, s, vm))
}

/// Applies the rotation that orthogonalises columns `p` and `q`:
/// `b = e^{-i phi} x_q`, then `x_p <- c x_p - s b`, `x_q <- s x_p + c b`.
fn rotate(cols: &mut [Vec<Complex>], p: usize, q: usize, cs: f64, sn: f64, phase: Complex) {
    let (lo, hi) = cols.split_at_mut(q);
    let xp = &mut lo[p];
    let xq = &mut hi[0];
    let pc = phase.conj();
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let bq = *b * pc;
        let ap = *a;
        *a = ap * cs - bq * sn;
        *b = ap * sn + bq * cs;
    }
}

/// Fills the empty slots in `basis` with unit vectors orthogonal to the rest.
fn complete_orthonormal(basis: &mut [Vec<Complex>], slots: &[usize], dim: usize) {
    let mut candidate = 0usize;
    for &slot in slots {
        loop {
            assert!(candidate < dim, "cannot complete basis");
            let mut v = vec![Complex::new(0.0, 0.0); dim];
            v[candidate] = Complex::new(1.0, 0.0);
            candidate += 1;
            for _ in 0..2 {
                for b in basis.iter().filter(|b| !b.is_empty()) {
                    let coef = dot_conj_right(&v, b);
                    for (x, y) in v.iter_mut().zip(b) {
                        *x -= coef * y;
                    }
                }
            }
            let norm = vec_norm_sqr(&v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|z| *z /= norm);
                basis[slot] = v;
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c;
    use crate::test_util::{random_matrix, rng};

    fn reconstruct(f: &Svd) -> ComplexMatrix {
        let k = f.singular_values.len();
        let us = ComplexMatrix::from_fn(f.u.rows(), k, |i, j| f.u[(i, j)] * f.singular_values[j]);
        us.matmul(&f.vh).unwrap()
    }

    #[test]
    fn diagonal_case() {
        let f = svd(&ComplexMatrix::from_real_diagonal(&[3.0, 1.0])).unwrap();
        assert_eq!(f.singular_values, vec![3.0, 1.0]);
        for i in 0..2 {
            assert!((f.u[(i, i)].norm() - 1.0).abs() < 1e-15);
            assert!((f.vh[(i, i)].norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn permutation_has_unit_singular_values() {
        let m = ComplexMatrix::from_rows(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]]);
        let f = svd(&m).unwrap();
        for s in f.singular_values {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn random_wide_reconstruction_and_orthonormality() {
        let mut r = rng(4);
        for _ in 0..10 {
            let m = random_matrix(&mut r, 4, 6);
            let f = svd(&m).unwrap();
            let err = reconstruct(&f).sub(&m).unwrap().frobenius_norm();
            assert!(err <= 1e-9 * m.frobenius_norm());
            assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let uhu = f.u.hermitian_matmul(&f.u).unwrap().sub(&ComplexMatrix::identity(4)).unwrap();
            let vvh = f.vh.gram_rows().sub(&ComplexMatrix::identity(4)).unwrap();
            assert!(uhu.frobenius_norm() < 1e-12 && vvh.frobenius_norm() < 1e-12);
        }
    }

    /// 2x2 subcase: singular values against the closed-form eigenvalues of
    /// the 2x2 Hermitian Gram matrix (characteristic polynomial).
    #[test]
    fn two_by_two_against_characteristic_polynomial() {
        let mut r = rng(9);
        for _ in 0..50 {
            let m = random_matrix(&mut r, 2, 2);
            let g = m.hermitian_matmul(&m).unwrap();
            let (a, d, b) = (g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)].norm_sqr());
            let tr = a + d;
            let disc = ((a - d) * (a - d) + 4.0 * b).sqrt();
            let expected = [((tr + disc) / 2.0).sqrt(), ((tr - disc) / 2.0).max(0.0).sqrt()];
            let f = svd(&m).unwrap();
            for (s, e) in f.singular_values.iter().zip(expected) {
                assert!((s - e).abs() <= 1e-10 * expected[0]);
            }
        }
    }

    #[test]
    fn rank_deficient_still_orthonormal() {
        let mut r = rng(12);
        let a = random_matrix(&mut r, 5, 2);
        let b = random_matrix(&mut r, 2, 3);
        let m = a.matmul(&b).unwrap(); // 5x3 rank 2
        let f = svd(&m).unwrap();
        assert!(f.singular_values[2] < 1e-12 * f.singular_values[0]);
        let uhu = f.u.hermitian_matmul(&f.u).unwrap().sub(&ComplexMatrix::identity(3)).unwrap();
        assert!(uhu.frobenius_norm() < 1e-10);
        assert!(reconstruct(&f).sub(&m).unwrap().frobenius_norm() <= 1e-9 * m.frobenius_norm());
    }
}
