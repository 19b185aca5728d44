//! Closed-form estimators on the full item set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::preprocess::GramMatrix;
use crate::weights::{SolverKind, WeightMatrix};

/// `C = S_lambda^-1` via Cholesky.
pub fn concentration(s: &GramMatrix) -> Result<DMatrix<f64>> {
    let chol = Cholesky::factor(&s.s).map_err(|f| Error::NotPositiveDefinite {
        context: format!("dense solve of {0}x{0} Gram matrix", s.dim()),
        pivot: f.pivot,
        pivot_value: f.value,
    })?;
    Ok(chol.inverse())
}

/// `B = I - C dMat(1 / diag C)`, i.e. `B_ji = -C_ji / C_ii` off the diagonal.
pub fn solve_dense(s: &GramMatrix) -> Result<WeightMatrix> {
    let c = concentration(s)?;
    let b = normalize_columns(&c);
    WeightMatrix::dense(b, SolverKind::Dense, s.lambda)
}

/// Dense solve under the extra constraint `mu^T B = mu^T`, which makes the
/// estimate invariant to centering the columns of the training data.
///
/// With `M = C - C mu mu^T C / (mu^T C mu)` the solution is
/// `B_ji = -M_ji / M_ii` off the diagonal.
pub fn solve_dense_mean_constrained(s: &GramMatrix, mu: &[f64]) -> Result<WeightMatrix> {
    let m = s.dim();
    if mu.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: mu.len(),
        });
    }
    if mu.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateMean("mean vector is zero".into()));
    }
    let c = concentration(s)?;
    let mu = DVector::from_column_slice(mu);
    let c_mu = &c * &mu;
    let mu_c = c.tr_mul(&mu);
    let q = mu.dot(&c_mu);
    if !(q.abs() > 0.0) || !q.is_finite() {
        return Err(Error::DegenerateMean(format!("mu^T C mu = {q:e}")));
    }
    let projected = c - (c_mu * mu_c.transpose()) / q;
    if let Some(i) = (0..m).find(|&i| !(projected[(i, i)].abs() > 0.0)) {
        return Err(Error::DegenerateMean(format!(
            "constrained diagonal vanishes at item {i}"
        )));
    }
    let b = normalize_columns(&projected);
    WeightMatrix::dense(b, SolverKind::DenseMeanConstrained, s.lambda)
}

fn normalize_columns(c: &DMatrix<f64>) -> DMatrix<f64> {
    let m = c.nrows();
    let mut b = DMatrix::zeros(m, m);
    for i in 0..m {
        let d = c[(i, i)];
        let src = c.column(i);
        let mut dst = b.column_mut(i);
        for j in 0..m {
            if j != i {
                dst[j] = -src[j] / d;
            }
        }
    }
    b
}

/// `||X - X B||_F^2 + lambda ||B||_F^2` from the cross product `X^T X`:
/// `trace((I - B)^T X^T X (I - B)) + lambda ||B||_F^2`.
pub fn objective(cross: &DMatrix<f64>, b: &WeightMatrix, lambda: f64) -> Result<f64> {
    objective_dense(cross, &b.to_dense(), lambda)
}

/// [`objective`] for an arbitrary square matrix, diagonal included.
pub fn objective_dense(cross: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let m = b.nrows();
    if cross.shape() != (m, m) || b.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: cross.nrows(),
        });
    }
    let resid = DMatrix::identity(m, m) - b;
    let g_resid = cross * &resid;
    Ok(resid.component_mul(&g_resid).sum() + lambda * b.norm_squared())
}

/// Largest off-diagonal `|(X^T X (B - I) + lambda B)_ji|`. The Lagrange
/// multipliers of the zero-diagonal constraint only touch the diagonal, so
/// this vanishes at the optimum.
pub fn kkt_residual(cross: &DMatrix<f64>, b: &WeightMatrix, lambda: f64) -> f64 {
    let m = b.dim();
    let bd = b.to_dense();
    let grad = cross * (&bd - DMatrix::identity(m, m)) + &bd * lambda;
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                worst = worst.max(grad[(j, i)].abs());
            }
        }
    }
    worst
}
