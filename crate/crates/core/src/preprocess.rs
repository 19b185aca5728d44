//! Per-item statistics, column centering / `std^alpha` scaling, and the
//! regularized Gram matrix `S_lambda = (X'^T X' + lambda I) / n`.
//!
//! Convention: the mean is subtracted first, then the column is divided by
//! `s_i`. Predictions are mapped back in reverse order (multiply by `s_i`,
//! then add the mean).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ingest::InteractionMatrix;

/// Default exponent grid for `alpha` searches.
pub const ALPHA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessStats {
    pub mu: Vec<f64>,
    /// Population standard deviation (divides by `n`).
    pub std: Vec<f64>,
    pub alpha: f64,
    /// `std_i^alpha`, or 1 where `std_i == 0`.
    pub s: Vec<f64>,
}

impl PreprocessStats {
    /// Stats that make [`transform`] the identity: `mu = 0`, `s = 1`.
    pub fn identity(m: usize) -> Self {
        PreprocessStats {
            mu: vec![0.0; m],
            std: vec![0.0; m],
            alpha: 0.0,
            s: vec![1.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Column means of the scaled, uncentered matrix: `mu_i / s_i`.
    pub fn scaled_means(&self) -> Vec<f64> {
        self.mu.iter().zip(&self.s).map(|(m, s)| m / s).collect()
    }
}

pub fn compute_stats(mat: &InteractionMatrix, alpha: f64) -> Result<PreprocessStats> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let n = mat.n_users();
    let m = mat.n_items();
    if n == 0 || m == 0 {
        return Err(Error::Data("cannot compute statistics of an empty matrix".into()));
    }
    let nf = n as f64;
    let mut sum = vec![0.0; m];
    let mut count = vec![0usize; m];
    for (_, i, v) in mat.iter() {
        sum[i] += v;
        count[i] += 1;
    }
    let mu: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    // two-pass: stored entries, then the implicit zeros
    let mut ss = vec![0.0; m];
    for (_, i, v) in mat.iter() {
        let d = v - mu[i];
        ss[i] += d * d;
    }
    let std: Vec<f64> = (0..m)
        .map(|i| {
            let zeros = (n - count[i]) as f64;
            ((ss[i] + zeros * mu[i] * mu[i]) / nf).sqrt()
        })
        .collect();
    let s = std
        .iter()
        .map(|&sd| if sd == 0.0 { 1.0 } else { sd.powf(alpha) })
        .collect();
    Ok(PreprocessStats { mu, std, alpha, s })
}

/// Implicitly transformed matrix `X' = (X - center * mu) / s`.
///
/// Stored as the scaled sparse matrix `Z = X / s` plus its column means
/// `mu / s`, so centering never densifies the data.
#[derive(Debug, Clone)]
pub struct TransformedMatrix {
    pub(crate) scaled: InteractionMatrix,
    pub(crate) scaled_means: Vec<f64>,
    pub(crate) centered: bool,
}

impl TransformedMatrix {
    pub fn n_users(&self) -> usize {
        self.scaled.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.scaled.n_items()
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    pub fn value(&self, u: usize, i: usize) -> f64 {
        let z = self.scaled.value(u, i);
        if self.centered {
            z - self.scaled_means[i]
        } else {
            z
        }
    }

    /// Dense `n x m` copy.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_users(), self.n_items(), |u, i| self.value(u, i))
    }
}

pub fn transform(
    mat: &InteractionMatrix,
    stats: &PreprocessStats,
    center: bool,
) -> Result<TransformedMatrix> {
    if stats.len() != mat.n_items() {
        return Err(Error::DimensionMismatch {
            expected: mat.n_items(),
            found: stats.len(),
        });
    }
    let trip = mat.iter().map(|(u, i, v)| (u, i, v / stats.s[i]));
    let scaled =
        InteractionMatrix::from_triplets(mat.users().clone(), mat.items().clone(), trip)?;
    Ok(TransformedMatrix {
        scaled,
        scaled_means: stats.scaled_means(),
        centered: center,
    })
}

/// Dense symmetric `S_lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub s: DMatrix<f64>,
    pub lambda: f64,
    /// Number of users used for the `1/n` normalization.
    pub n: usize,
}

impl GramMatrix {
    /// Wraps an explicit symmetric matrix.
    pub fn from_matrix(s: DMatrix<f64>, lambda: f64, n: usize) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::DimensionMismatch {
                expected: s.nrows(),
                found: s.ncols(),
            });
        }
        Ok(GramMatrix { s, lambda, n })
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// `X'^T X'` without ridge or normalization: `n S - lambda I`.
    pub fn cross_product(&self) -> DMatrix<f64> {
        let mut g = &self.s * self.n as f64;
        for i in 0..self.dim() {
            g[(i, i)] -= self.lambda;
        }
        g
    }

    /// Same Gram scaled by `c` (ridge and `n` metadata unchanged).
    pub fn scaled(&self, c: f64) -> Self {
        GramMatrix {
            s: &self.s * c,
            lambda: self.lambda,
            n: self.n,
        }
    }

    /// Largest `|S_ij - S_ji| / max|S|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.s.amax().max(f64::MIN_POSITIVE);
        (&self.s - self.s.transpose()).amax() / scale
    }
}

/// `S = (X'^T X' + lambda I) / n`.
///
/// `Z^T Z` is accumulated from each user's sparse row (upper triangle), then
/// centering applies the rank-one correction `Z^T Z - n mu' mu'^T`. The lower
/// triangle is mirrored from the upper one, so the result is exactly symmetric.
pub fn gram(mat: &TransformedMatrix, lambda: f64) -> Result<GramMatrix> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let m = mat.n_items();
    let n = mat.n_users();
    if n == 0 {
        return Err(Error::Data("cannot build a Gram matrix from zero users".into()));
    }
    let mut g = DMatrix::<f64>::zeros(m, m);
    for u in 0..n {
        let (idx, val) = mat.scaled.row(u);
        for (b, (&ib, &vb)) in idx.iter().zip(val).enumerate() {
            let mut col = g.column_mut(ib);
            for (&ia, &va) in idx[..=b].iter().zip(&val[..=b]) {
                col[ia] += va * vb;
            }
        }
    }
    let nf = n as f64;
    if mat.centered {
        let mu = &mat.scaled_means;
        for j in 0..m {
            for i in 0..=j {
                g[(i, j)] -= nf * mu[i] * mu[j];
            }
        }
    }
    for j in 0..m {
        g[(j, j)] += lambda;
        for i in 0..=j {
            g[(i, j)] /= nf;
        }
        for i in 0..j {
            g[(j, i)] = g[(i, j)];
        }
    }
    Ok(GramMatrix { s: g, lambda, n })
}
