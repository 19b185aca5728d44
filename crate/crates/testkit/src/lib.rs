//! Test support for `gmrf-core`: reference solvers that share no code with
//! the production solvers, and seeded synthetic data generators.
//!
//! The oracles work on plain row-major `Vec<Vec<f64>>` matrices and solve
//! linear systems by Gaussian elimination with partial pivoting, so they stay
//! independent of the Cholesky-based paths they check.

use gmrf_core::InteractionMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type DenseRows = Vec<Vec<f64>>;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("singular linear system (pivot column {0})")]
    Singular(usize),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: DenseRows, mut b: Vec<f64>) -> Result<Vec<f64>, OracleError> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        if a[piv][col].abs() <= 1e-13 * scale {
            return Err(OracleError::Singular(col));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Ridge regression of column `i` of `x` on all other columns:
/// solves `(X_{-i}^T X_{-i} + lambda I) b = X_{-i}^T x_i` and returns `b`
/// embedded at the positions `!= i`, with 0 at `i`.
pub fn ridge_column_oracle(x: &DenseRows, i: usize, lambda: f64) -> Result<Vec<f64>, OracleError> {
    let m = x.first().map_or(0, Vec::len);
    assert!(i < m);
    let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
    let (a, rhs) = normal_equations(x, i, &others, lambda);
    let b = solve_linear(a, rhs)?;
    let mut out = vec![0.0; m];
    for (k, &j) in others.iter().enumerate() {
        out[j] = b[k];
    }
    Ok(out)
}

/// Column `i` of the ridge fit under the extra linear constraint
/// `mu^T b = mu_i`: solves the bordered system
/// `[[A, mu_{-i}], [mu_{-i}^T, 0]] [b; nu] = [X_{-i}^T x_i; mu_i]`
/// with `A = X_{-i}^T X_{-i} + lambda I`.
pub fn constrained_column_oracle(
    x: &DenseRows,
    i: usize,
    lambda: f64,
    mu: &[f64],
) -> Result<Vec<f64>, OracleError> {
    let m = mu.len();
    assert!(i < m);
    let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
    let (mut a, mut rhs) = normal_equations(x, i, &others, lambda);
    for (row, &j) in a.iter_mut().zip(&others) {
        row.push(mu[j]);
    }
    let mut border: Vec<f64> = others.iter().map(|&j| mu[j]).collect();
    border.push(0.0);
    a.push(border);
    rhs.push(mu[i]);
    let sol = solve_linear(a, rhs)?;
    let mut out = vec![0.0; m];
    for (k, &j) in others.iter().enumerate() {
        out[j] = sol[k];
    }
    Ok(out)
}

/// Relative residual `||A b - rhs|| / ||rhs||` of the normal equations
/// behind [`ridge_column_oracle`].
pub fn ridge_residual(x: &DenseRows, i: usize, lambda: f64, coef: &[f64]) -> f64 {
    let m = coef.len();
    let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
    let (a, rhs) = normal_equations(x, i, &others, lambda);
    let b: Vec<f64> = others.iter().map(|&j| coef[j]).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (row, r) in a.iter().zip(&rhs) {
        let ab: f64 = row.iter().zip(&b).map(|(p, q)| p * q).sum();
        num += (ab - r).powi(2);
        den += r * r;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn normal_equations(x: &DenseRows, i: usize, others: &[usize], lambda: f64) -> (DenseRows, Vec<f64>) {
    let k = others.len();
    let mut a = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for row in x {
        for (p, &jp) in others.iter().enumerate() {
            let v = row[jp];
            if v == 0.0 {
                continue;
            }
            rhs[p] += v * row[i];
            for (q, &jq) in others.iter().enumerate() {
                a[p][q] += v * row[jq];
            }
        }
    }
    for (p, r) in a.iter_mut().enumerate() {
        r[p] += lambda;
    }
    (a, rhs)
}

/// Column means of a dense matrix.
pub fn column_means(x: &DenseRows) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.first().map_or(0, Vec::len);
    (0..m).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// `x - 1 mu^T`.
pub fn center_columns(x: &DenseRows) -> DenseRows {
    let mu = column_means(x);
    x.iter()
        .map(|r| r.iter().zip(&mu).map(|(v, m)| v - m).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Probability that a user-item cell (within the user's block) is 1.
    pub density: f64,
    /// Item-group sizes for block-diagonal data; must sum to `n_items`.
    pub blocks: Option<Vec<usize>>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn random(n_users: usize, n_items: usize, density: f64, seed: u64) -> Self {
        SyntheticSpec {
            n_users,
            n_items,
            density,
            blocks: None,
            seed,
        }
    }
}

/// Binary matrix with i.i.d. Bernoulli(`density`) cells.
pub fn random_binary(spec: &SyntheticSpec) -> DenseRows {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_users)
        .map(|_| {
            (0..spec.n_items)
                .map(|_| if rng.gen::<f64>() < spec.density { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Block-diagonal binary data: each user is assigned one block uniformly at
/// random and interacts only with items of that block (Bernoulli(`density`)
/// per cell). No user touches two blocks, so every cross-block entry of the
/// uncentered Gram matrix `X^T X` is exactly zero.
pub fn make_block_diagonal_rows(spec: &SyntheticSpec) -> Result<DenseRows, OracleError> {
    let blocks = spec
        .blocks
        .clone()
        .unwrap_or_else(|| vec![spec.n_items]);
    if blocks.contains(&0) {
        return Err(OracleError::Spec("block of size 0".into()));
    }
    if blocks.iter().sum::<usize>() != spec.n_items {
        return Err(OracleError::Spec(format!(
            "block sizes {blocks:?} do not sum to {} items",
            spec.n_items
        )));
    }
    let mut starts = vec![0];
    for b in &blocks {
        starts.push(starts.last().unwrap() + b);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.n_users)
        .map(|_| {
            let g = rng.gen_range(0..blocks.len());
            let mut row = vec![0.0; spec.n_items];
            for cell in &mut row[starts[g]..starts[g + 1]] {
                if rng.gen::<f64>() < spec.density {
                    *cell = 1.0;
                }
            }
            row
        })
        .collect())
}

pub fn make_block_diagonal(spec: &SyntheticSpec) -> Result<InteractionMatrix, OracleError> {
    let rows = make_block_diagonal_rows(spec)?;
    Ok(InteractionMatrix::from_dense_rows(&rows).expect("rectangular rows"))
}

/// Item indices grouped by block, for a block-diagonal spec.
pub fn block_members(blocks: &[usize]) -> Vec<Vec<usize>> {
    let mut start = 0;
    blocks
        .iter()
        .map(|&b| {
            let g = (start..start + b).collect();
            start += b;
            g
        })
        .collect()
}

/// Clustered implicit-feedback data with popularity skew.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    /// Interactions drawn per user (before deduplication).
    pub items_per_user: usize,
    /// Probability that a draw comes from one of the user's own clusters.
    pub in_cluster: f64,
    pub seed: u64,
}

/// Items are split into contiguous clusters. Each user prefers one or two
/// clusters; draws come from those clusters with probability `in_cluster`
/// and from the whole catalogue otherwise. Within any pool, item `k` of the
/// pool has weight `1 / (k + 1)^0.7`.
pub fn make_clustered(spec: &ClusteredSpec) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per = spec.n_items / spec.n_clusters;
    let cluster_of = |c: usize| -> Vec<usize> {
        let end = if c + 1 == spec.n_clusters { spec.n_items } else { (c + 1) * per };
        (c * per..end).collect()
    };
    let mut all: Vec<usize> = (0..spec.n_items).collect();
    all.shuffle(&mut rng);
    let draw = |pool: &[usize], rng: &mut ChaCha8Rng| -> usize {
        let w: Vec<f64> = (0..pool.len()).map(|k| 1.0 / ((k + 1) as f64).powf(0.7)).collect();
        let total: f64 = w.iter().sum();
        let mut t = rng.gen::<f64>() * total;
        for (k, wk) in w.iter().enumerate() {
            t -= wk;
            if t <= 0.0 {
                return pool[k];
            }
        }
        pool[pool.len() - 1]
    };
    let mut trip = Vec::new();
    for u in 0..spec.n_users {
        let c1 = rng.gen_range(0..spec.n_clusters);
        let mut pool = cluster_of(c1);
        if rng.gen::<f64>() < 0.5 {
            let c2 = rng.gen_range(0..spec.n_clusters);
            if c2 != c1 {
                pool.extend(cluster_of(c2));
            }
        }
        for _ in 0..spec.items_per_user {
            let i = if rng.gen::<f64>() < spec.in_cluster {
                draw(&pool, &mut rng)
            } else {
                draw(&all, &mut rng)
            };
            trip.push((u, i, 1.0));
        }
    }
    InteractionMatrix::from_indexed(spec.n_users, spec.n_items, trip).expect("valid triplets")
}

/// Dense row-major copy of an interaction matrix.
pub fn to_rows(mat: &InteractionMatrix) -> DenseRows {
    let mut rows = vec![vec![0.0; mat.n_items()]; mat.n_users()];
    for (u, i, v) in mat.iter() {
        rows[u][i] = v;
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_user_ridge() {
        let x = vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let b = ridge_column_oracle(&x, 1, 1.0).unwrap();
        assert_eq!(b[1], 0.0);
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(ridge_residual(&x, 1, 1.0, &b) < 1e-14);
    }

    #[test]
    fn duplicated_columns_share_weight() {
        let x = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ];
        let b = ridge_column_oracle(&x, 2, 0.5).unwrap();
        assert!((b[0] - b[1]).abs() < 1e-14);
        assert!(ridge_column_oracle(&x, 2, 0.0).is_err());
    }

    #[test]
    fn shrinkage_is_monotone() {
        let x = random_binary(&SyntheticSpec::random(30, 6, 0.4, 3));
        let norms: Vec<f64> = [0.1, 1.0, 10.0, 100.0, 1000.0]
            .iter()
            .map(|&l| {
                ridge_column_oracle(&x, 2, l)
                    .unwrap()
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    }

    #[test]
    fn self_consistency_on_random_data() {
        for seed in 0..5 {
            let x = random_binary(&SyntheticSpec::random(40, 9, 0.3, seed));
            for i in 0..9 {
                let b = ridge_column_oracle(&x, i, 2.0).unwrap();
                assert!(ridge_residual(&x, i, 2.0, &b) <= 1e-10);
            }
        }
    }

    #[test]
    fn block_diagonal_generator() {
        let spec = SyntheticSpec {
            n_users: 50,
            n_items: 4,
            density: 0.6,
            blocks: Some(vec![2, 2]),
            seed: 11,
        };
        let rows = make_block_diagonal_rows(&spec).unwrap();
        for r in &rows {
            let left = r[0] + r[1] > 0.0;
            let right = r[2] + r[3] > 0.0;
            assert!(!(left && right));
        }
        assert_eq!(rows, make_block_diagonal_rows(&spec).unwrap());
        let single = SyntheticSpec { blocks: None, ..spec.clone() };
        assert_eq!(make_block_diagonal_rows(&single).unwrap().len(), 50);
        let bad = SyntheticSpec { blocks: Some(vec![4, 0]), ..spec.clone() };
        assert!(make_block_diagonal_rows(&bad).is_err());
        let bad = SyntheticSpec { blocks: Some(vec![3, 2]), ..spec };
        assert!(make_block_diagonal_rows(&bad).is_err());
    }

    #[test]
    fn clustered_is_deterministic() {
        let spec = ClusteredSpec {
            n_users: 50,
            n_items: 40,
            n_clusters: 4,
            items_per_user: 8,
            in_cluster: 0.8,
            seed: 5,
        };
        assert_eq!(make_clustered(&spec), make_clustered(&spec));
        assert_eq!(make_clustered(&spec).n_items(), 40);
    }
}
