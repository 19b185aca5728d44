//! Dense symmetric positive-definite factorization.
//!
//! Matrices are `nalgebra::DMatrix<f64>`, which stores columns contiguously.
//! The factor is kept as an upper-triangular `U` with `A = U^T U`, so every
//! inner product in the factorization and in the forward solve runs over a
//! contiguous column prefix.

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Failing pivot of an attempted Cholesky factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub pivot: usize,
    pub value: f64,
}

/// Upper Cholesky factor `U` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    upper: DMatrix<f64>,
}

impl Cholesky {
    /// Factors `a`. Only the upper triangle of `a` is read.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self, PivotFailure> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky of a non-square matrix");
        let mut u = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for i in 0..j {
                let dot = dot_prefix(&u, i, j, i);
                u[(i, j)] = (a[(i, j)] - dot) / u[(i, i)];
            }
            let d = a[(j, j)] - dot_prefix(&u, j, j, j);
            if !(d > 0.0) || !d.is_finite() {
                return Err(PivotFailure { pivot: j, value: d });
            }
            u[(j, j)] = d.sqrt();
        }
        Ok(Cholesky { upper: u })
    }

    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let u = &self.upper;
        // U^T y = b
        for k in 0..n {
            let col = u.column(k);
            let mut s = b[k];
            for l in 0..k {
                s -= col[l] * b[l];
            }
            b[k] = s / col[k];
        }
        // U x = y, column-oriented
        for k in (0..n).rev() {
            let col = u.column(k);
            let xk = b[k] / col[k];
            b[k] = xk;
            for l in 0..k {
                b[l] -= xk * col[l];
            }
        }
    }

    /// Column `j` of `A^-1`. The forward solve starts at row `j`, so late
    /// columns are cheaper.
    pub fn inverse_column(&self, j: usize) -> Vec<f64> {
        let n = self.dim();
        let u = &self.upper;
        let mut x = vec![0.0; n];
        x[j] = 1.0 / u[(j, j)];
        for k in j + 1..n {
            let col = u.column(k);
            let mut s = 0.0;
            for l in j..k {
                s -= col[l] * x[l];
            }
            x[k] = s / col[k];
        }
        for k in (0..n).rev() {
            let col = u.column(k);
            let xk = x[k] / col[k];
            x[k] = xk;
            for l in 0..k {
                x[l] -= xk * col[l];
            }
        }
        x
    }

    /// Full inverse; columns are solved in parallel, each independently, so
    /// the result does not depend on the thread count.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| self.inverse_column(j))
            .collect();
        let mut out = DMatrix::<f64>::zeros(n, n);
        for (j, c) in cols.into_iter().enumerate() {
            out.column_mut(j).copy_from_slice(&c);
        }
        out
    }
}

#[inline]
fn dot_prefix(u: &DMatrix<f64>, ci: usize, cj: usize, len: usize) -> f64 {
    let a = &u.column(ci);
    let b = &u.column(cj);
    let mut s = 0.0;
    for k in 0..len {
        s += a[k] * b[k];
    }
    s
}

/// `a[idx; idx]`, rows and columns in the order of `idx`.
pub fn principal_submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let k = idx.len();
    DMatrix::from_fn(k, k, |r, c| a[(idx[r], idx[c])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]);
        let inv = Cholesky::factor(&a).unwrap().inverse();
        let expect = DMatrix::from_row_slice(2, 2, &[9.0 / 8.0, -3.0 / 8.0, -3.0 / 8.0, 9.0 / 8.0]);
        assert!((inv - expect).abs().max() < 1e-14);
    }

    #[test]
    fn reports_failing_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = Cholesky::factor(&a).unwrap_err();
        assert_eq!(err.pivot, 1);
        assert!(err.value.abs() < 1e-15);

        let neg = DMatrix::from_row_slice(1, 1, &[-2.0]);
        assert_eq!(Cholesky::factor(&neg).unwrap_err().pivot, 0);
    }

    #[test]
    fn solve_matches_product() {
        let m = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let a = m.transpose() * &m + DMatrix::identity(6, 6);
        let chol = Cholesky::factor(&a).unwrap();
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let b = &a * nalgebra::DVector::from_vec(x.clone());
        let mut sol = b.as_slice().to_vec();
        chol.solve_in_place(&mut sol);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-10);
        }
        let prod = &a * chol.inverse();
        assert!((prod - DMatrix::identity(6, 6)).abs().max() < 1e-10);
    }
}
