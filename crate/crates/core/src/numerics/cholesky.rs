use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use super::{Complex, ComplexMatrix, LinalgError, PIVOT_TOLERANCE};

const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Lower-triangular factor `L` with `A = L L^H` and a real positive diagonal.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: ComplexMatrix,
}

impl Cholesky {
    /// Factors a Hermitian positive-definite matrix. Only the lower triangle
    /// is read after a Hermitian sanity check.
    pub fn new(a: &ComplexMatrix) -> Result<Self, LinalgError> {
        let n = a.rows();
        if n != a.cols() {
            return Err(LinalgError::NotSquare(a.rows(), a.cols()));
        }
        check_hermitian(a)?;
        let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
        let tol = PIVOT_TOLERANCE * scale;
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let lj = l.row(j);
            let d = a[(j, j)].re - lj[..j].iter().map(|z| z.norm_sqr()).sum::<f64>();
            if !(d > tol) {
                return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex::new(djj, 0.0);
            for i in j + 1..n {
                let (head, tail) = l.as_mut_slice().split_at_mut(i * n);
                let row_j = &head[j * n..j * n + j];
                let row_i = &tail[..j];
                let mut acc = a[(i, j)];
                for (x, y) in row_i.iter().zip(row_j) {
                    acc -= x * y.conj();
                }
                tail[j] = acc / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &ComplexMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `A X = B` for all columns of `B` at once.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        let n = self.dim();
        if b.rows() != n {
            return Err(LinalgError::DimensionMismatch { op: "solve_hpd", left: (n, n), right: b.shape() });
        }
        let m = b.cols();
        let mut x = b.clone();
        // forward: L Y = B, row by row
        for i in 0..n {
            let (done, rest) = x.as_mut_slice().split_at_mut(i * m);
            let row_i = &mut rest[..m];
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik.re == 0.0 && lik.im == 0.0 {
                    continue;
                }
                for (xi, yk) in row_i.iter_mut().zip(&done[k * m..(k + 1) * m]) {
                    *xi -= lik * yk;
                }
            }
            let inv = 1.0 / self.l[(i, i)].re;
            row_i.iter_mut().for_each(|z| *z *= inv);
        }
        // backward: L^H X = Y
        for i in (0..n).rev() {
            let (head, tail) = x.as_mut_slice().split_at_mut((i + 1) * m);
            let row_i = &mut head[i * m..];
            for k in i + 1..n {
                let lki = self.l[(k, i)].conj();
                if lki.re == 0.0 && lki.im == 0.0 {
                    continue;
                }
                for (xi, xk) in row_i.iter_mut().zip(&tail[(k - i - 1) * m..(k - i) * m]) {
                    *xi -= lki * xk;
                }
            }
            let inv = 1.0 / self.l[(i, i)].re;
            row_i.iter_mut().for_each(|z| *z *= inv);
        }
        Ok(x)
    }

    pub fn solve_vec(&self, b: &[Complex]) -> Result<Vec<Complex>, LinalgError> {
        Ok(self.solve(&ComplexMatrix::column_vector(b))?.into_vec())
    }

    /// Explicit inverse, assembled from solves against the identity.
    pub fn inverse(&self) -> ComplexMatrix {
        self.solve(&ComplexMatrix::identity(self.dim())).expect("square by construction")
    }

    /// Diagonal of `A^{-1}` via `L^{-1}`: `(A^{-1})_jj = sum_k |(L^{-1})_kj|^2`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.dim();
        let mut linv = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            linv[(j, j)] = Complex::new(1.0 / self.l[(j, j)].re, 0.0);
            for i in j + 1..n {
                let mut acc = Complex::new(0.0, 0.0);
                for k in j..i {
                    acc += self.l[(i, k)] * linv[(k, j)];
                }
                linv[(i, j)] = -acc / self.l[(i, i)].re;
            }
        }
        (0..n).map(|j| (j..n).map(|k| linv[(k, j)].norm_sqr()).sum()).collect()
    }

    /// `log2 det A = 2 sum log2 L_ii`.
    pub fn logdet2(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].re.log2()).sum::<f64>()
    }
}

fn check_hermitian(a: &ComplexMatrix) -> Result<(), LinalgError> {
    let n = a.rows();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            asym = asym.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    if asym > HERMITIAN_TOLERANCE * scale {
        return Err(LinalgError::NotHermitian { asymmetry: asym });
    }
    Ok(())
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn solve_hpd(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    Cholesky::new(a)?.solve(b)
}

/// `log2 det A` for Hermitian positive-definite `A`, through the Cholesky factor.
pub fn logdet2_hpd(a: &ComplexMatrix) -> Result<f64, LinalgError> {
    Ok(Cholesky::new(a)?.logdet2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c;
    use crate::test_util::{random_hpd, random_matrix};

    #[test]
    fn identity_solve_returns_rhs() {
        let b = ComplexMatrix::from_rows(&[&[c(1.0, 2.0), c(-3.0, 0.5)], &[c(0.0, 1.0), c(4.0, 0.0)]]);
        let x = solve_hpd(&ComplexMatrix::identity(2), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_solve() {
        let a = ComplexMatrix::from_real_diagonal(&[2.0, 4.0]);
        let x = solve_hpd(&a, &ComplexMatrix::identity(2)).unwrap();
        assert!(x.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[0.5, 0.25])) < 1e-15);
    }

    #[test]
    fn random_residual() {
        let mut rng = crate::test_util::rng(7);
        let g = random_matrix(&mut rng, 4, 4);
        let mut a = g.gram_rows();
        a.add_diagonal(1.0);
        let b = random_matrix(&mut rng, 4, 3);
        let x = solve_hpd(&a, &b).unwrap();
        let r = a.matmul(&x).unwrap().sub(&b).unwrap();
        assert!(r.frobenius_norm() / b.frobenius_norm() <= 1e-10);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let a = ComplexMatrix::from_real_diagonal(&[1.0, -1.0, 2.0]);
        match solve_hpd(&a, &ComplexMatrix::identity(3)) {
            Err(LinalgError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn singular_gram_is_rejected() {
        let mut rng = crate::test_util::rng(3);
        // rank 2 Gram of size 3
        let g = random_matrix(&mut rng, 3, 2);
        let a = g.gram_rows();
        assert!(matches!(Cholesky::new(&a), Err(LinalgError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn non_hermitian_rejected() {
        let a = ComplexMatrix::from_rows(&[&[c(2.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(2.0, 0.0)]]);
        assert!(matches!(Cholesky::new(&a), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet2_hpd(&ComplexMatrix::identity(3)).unwrap(), 0.0);
        let v = logdet2_hpd(&ComplexMatrix::from_real_diagonal(&[2.0, 4.0])).unwrap();
        assert!((v - 3.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_diagonal_matches_inverse() {
        let mut rng = crate::test_util::rng(11);
        let a = random_hpd(&mut rng, 6);
        let ch = Cholesky::new(&a).unwrap();
        let inv = ch.inverse();
        for (j, d) in ch.inverse_diagonal().into_iter().enumerate() {
            assert!((inv[(j, j)].re - d).abs() < 1e-12 * d.abs().max(1.0));
        }
    }

    #[test]
    fn inverse_roundtrip_moderate_condition() {
        // condition number 1e6 through a unitary similarity
        let mut rng = crate::test_util::rng(5);
        let q = crate::numerics::lq_decompose(&random_matrix(&mut rng, 5, 5)).unwrap().q;
        let d = ComplexMatrix::from_real_diagonal(&[1.0, 10.0, 1e3, 1e4, 1e6]);
        let a = q.hermitian().matmul(&d).unwrap().matmul(&q).unwrap();
        let a = ComplexMatrix::from_fn(5, 5, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
        let x = solve_hpd(&a, &ComplexMatrix::identity(5)).unwrap();
        let e = a.matmul(&x).unwrap().sub(&ComplexMatrix::identity(5)).unwrap();
        assert!(e.frobenius_norm() <= 1e-9, "{}", e.frobenius_norm());
    }
}
