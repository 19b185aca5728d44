//! The learned item-item weight matrix `B`.
//!
//! `B[(j, i)]` is the coefficient of item `j` in the regression of item `i`,
//! so a user's score vector is the row-vector product `x B`. The diagonal is
//! zero by construction and never stored.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Dense,
    DenseMeanConstrained,
    Sparse,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Dense => "dense",
            SolverKind::DenseMeanConstrained => "dense-mean-constrained",
            SolverKind::Sparse => "sparse",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(SolverKind::Dense),
            "dense-mean-constrained" => Ok(SolverKind::DenseMeanConstrained),
            "sparse" => Ok(SolverKind::Sparse),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

/// Column-compressed off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
}

impl SparseColumns {
    /// From `(row, col, value)` triplets; entries must be unique and
    /// off-diagonal. Exact zeros are dropped.
    pub fn from_triplets(m: usize, mut trip: Vec<(usize, usize, f64)>) -> Result<Self> {
        trip.retain(|t| t.2 != 0.0);
        trip.sort_unstable_by_key(|t| (t.1, t.0));
        let mut col_ptr = vec![0usize; m + 1];
        for w in trip.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::Data(format!("duplicate weight entry ({}, {})", w[0].0, w[0].1)));
            }
        }
        for &(j, i, v) in &trip {
            if j >= m || i >= m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: j.max(i) + 1,
                });
            }
            if j == i {
                return Err(Error::Data(format!("diagonal weight entry ({j}, {j})")));
            }
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite weight at ({j}, {i})")));
            }
            col_ptr[i + 1] += 1;
        }
        for i in 0..m {
            col_ptr[i + 1] += col_ptr[i];
        }
        Ok(SparseColumns {
            col_ptr,
            rows: trip.iter().map(|t| t.0).collect(),
            values: trip.iter().map(|t| t.2).collect(),
        })
    }

    pub fn column(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.col_ptr[i]..self.col_ptr[i + 1];
        (&self.rows[span.clone()], &self.values[span])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Dense(DMatrix<f64>),
    Sparse(SparseColumns),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    m: usize,
    weights: Weights,
    pub kind: SolverKind,
    pub lambda: f64,
    /// Set by the training pipeline; solvers leave it `None`.
    pub alpha: Option<f64>,
    pub r: Option<f64>,
    pub target_density: Option<f64>,
}

impl WeightMatrix {
    /// Dense weights; the diagonal is overwritten with exact zeros.
    pub fn dense(mut b: DMatrix<f64>, kind: SolverKind, lambda: f64) -> Result<Self> {
        let m = b.nrows();
        if b.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: b.ncols(),
            });
        }
        for i in 0..m {
            b[(i, i)] = 0.0;
        }
        if let Some(p) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite weight at ({}, {})",
                p % m,
                p / m
            )));
        }
        Ok(WeightMatrix {
            m,
            weights: Weights::Dense(b),
            kind,
            lambda,
            alpha: None,
            r: None,
            target_density: None,
        })
    }

    pub fn sparse(m: usize, cols: SparseColumns, kind: SolverKind, lambda: f64) -> Self {
        WeightMatrix {
            m,
            weights: Weights::Sparse(cols),
            kind,
            lambda,
            alpha: None,
            r: None,
            target_density: None,
        }
    }

    pub fn zeros(m: usize) -> Self {
        let cols = SparseColumns::from_triplets(m, Vec::new()).expect("empty");
        Self::sparse(m, cols, SolverKind::Dense, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn storage(&self) -> &Weights {
        &self.weights
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        match &self.weights {
            Weights::Dense(b) => b[(j, i)],
            Weights::Sparse(c) => {
                let (rows, vals) = c.column(i);
                rows.binary_search(&j).map_or(0.0, |p| vals[p])
            }
        }
    }

    /// Nonzero off-diagonal entries `(row, col, value)`, column-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        match &self.weights {
            Weights::Dense(b) => {
                for i in 0..self.m {
                    for j in 0..self.m {
                        let v = b[(j, i)];
                        if j != i && v != 0.0 {
                            out.push((j, i, v));
                        }
                    }
                }
            }
            Weights::Sparse(c) => {
                for i in 0..self.m {
                    let (rows, vals) = c.column(i);
                    out.extend(rows.iter().zip(vals).map(|(&j, &v)| (j, i, v)));
                }
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        match &self.weights {
            Weights::Dense(b) => b.iter().filter(|v| **v != 0.0).count(),
            Weights::Sparse(c) => c.values.len(),
        }
    }

    /// Fraction of off-diagonal entries that are nonzero.
    pub fn density(&self) -> f64 {
        if self.m < 2 {
            return 0.0;
        }
        self.nnz() as f64 / (self.m * (self.m - 1)) as f64
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.weights {
            Weights::Dense(b) => b.clone(),
            Weights::Sparse(_) => {
                let mut b = DMatrix::zeros(self.m, self.m);
                for (j, i, v) in self.triplets() {
                    b[(j, i)] = v;
                }
                b
            }
        }
    }

    /// Rows of `B` as sparse lists `j -> [(i, B_ji)]`, used for `x B`.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.m];
        for (j, i, v) in self.triplets() {
            rows[j].push((i, v));
        }
        rows
    }

    /// True when every diagonal entry is `+0.0` bit for bit.
    pub fn diagonal_is_exact_zero(&self) -> bool {
        (0..self.m).all(|i| self.get(i, i).to_bits() == 0)
    }

    pub fn max_abs_diff(&self, other: &WeightMatrix) -> f64 {
        assert_eq!(self.m, other.m);
        (self.to_dense() - other.to_dense()).amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forces_zero_diagonal() {
        let b = DMatrix::from_row_slice(2, 2, &[1e-17, 0.5, 0.25, -3.0]);
        let w = WeightMatrix::dense(b, SolverKind::Dense, 1.0).unwrap();
        assert!(w.diagonal_is_exact_zero());
        assert_eq!(w.triplets(), vec![(1, 0, 0.25), (0, 1, 0.5)]);
        assert_eq!(w.density(), 1.0);
    }

    #[test]
    fn sparse_lookup_and_rejections() {
        let c = SparseColumns::from_triplets(3, vec![(2, 0, 1.5), (0, 2, -1.0), (1, 2, 0.0)]).unwrap();
        let w = WeightMatrix::sparse(3, c, SolverKind::Sparse, 1.0);
        assert_eq!(w.get(2, 0), 1.5);
        assert_eq!(w.get(1, 2), 0.0);
        assert_eq!(w.nnz(), 2);
        assert_eq!(w.rows()[0], vec![(2, -1.0)]);
        assert!(SparseColumns::from_triplets(3, vec![(1, 1, 1.0)]).is_err());
        assert!(SparseColumns::from_triplets(3, vec![(1, 0, 1.0), (1, 0, 2.0)]).is_err());
        assert!(SparseColumns::from_triplets(2, vec![(3, 0, 1.0)]).is_err());
    }

    #[test]
    fn solver_kind_names() {
        for k in [SolverKind::Dense, SolverKind::DenseMeanConstrained, SolverKind::Sparse] {
            assert_eq!(k.as_str().parse::<SolverKind>().unwrap(), k);
        }
        assert!("lasso".parse::<SolverKind>().is_err());
    }
}
