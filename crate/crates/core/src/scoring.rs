//! Per-user scores `x B` and top-N ranking.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::PreprocessStats;
use crate::weights::WeightMatrix;

/// A user's observed interactions as sorted `(item, value)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserVector {
    entries: Vec<(usize, f64)>,
}

impl UserVector {
    pub fn new(m: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Data(format!("item {} listed twice", w[0].0)));
            }
        }
        for &(i, v) in &entries {
            if i >= m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: i + 1,
                });
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Data(format!("value {v} for item {i} must be finite and >= 0")));
            }
        }
        Ok(UserVector { entries })
    }

    /// Binary vector over the given items.
    pub fn binary(m: usize, items: &[usize]) -> Result<Self> {
        Self::new(m, items.iter().map(|&i| (i, 1.0)).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn items(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

/// Scores users against a fixed model.
///
/// The input is transformed as in training (`(x - center mu) / s`), pushed
/// through `B`, and mapped back with `y_i = y'_i s_i + center mu_i`. The
/// centering term `(mu / s) B` is precomputed, so each user costs only the
/// rows of `B` for the items they touched.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    rows: Vec<Vec<(usize, f64)>>,
    stats: &'a PreprocessStats,
    center: bool,
    offset: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(b: &WeightMatrix, stats: &'a PreprocessStats, center: bool) -> Result<Self> {
        let m = b.dim();
        if stats.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: stats.len(),
            });
        }
        let rows = b.rows();
        let mut offset = vec![0.0; m];
        if center {
            for (j, row) in rows.iter().enumerate() {
                let mj = stats.mu[j] / stats.s[j];
                if mj != 0.0 {
                    for &(i, w) in row {
                        offset[i] += mj * w;
                    }
                }
            }
        }
        Ok(Scorer {
            rows,
            stats,
            center,
            offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Scores in the transformed space, before back-scaling.
    pub fn raw_scores(&self, x: &UserVector) -> Vec<f64> {
        let mut y: Vec<f64> = if self.center {
            self.offset.iter().map(|o| -o).collect()
        } else {
            vec![0.0; self.dim()]
        };
        for &(j, v) in x.entries() {
            let z = v / self.stats.s[j];
            for &(i, w) in &self.rows[j] {
                y[i] += z * w;
            }
        }
        y
    }

    pub fn scores(&self, x: &UserVector) -> Vec<f64> {
        let mut y = self.raw_scores(x);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi *= self.stats.s[i];
            if self.center {
                *yi += self.stats.mu[i];
            }
        }
        y
    }

    /// Scores for many users, in parallel, in input order.
    pub fn scores_batch(&self, users: &[UserVector]) -> Vec<Vec<f64>> {
        users.par_iter().map(|x| self.scores(x)).collect()
    }
}

pub fn score_all(
    b: &WeightMatrix,
    x: &UserVector,
    stats: &PreprocessStats,
    center: bool,
) -> Result<Vec<f64>> {
    Ok(Scorer::new(b, stats, center)?.scores(x))
}

/// Items ordered by score (descending), ties by item index (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<(usize, f64)>,
    pub excluded: Vec<usize>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|e| e.0)
    }
}

fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `n` best items not in `exclude`.
pub fn top_n(scores: &[f64], exclude: &[usize], n: usize) -> RankedList {
    let mut skip = vec![false; scores.len()];
    for &e in exclude {
        if e < skip.len() {
            skip[e] = true;
        }
    }
    let mut cand: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip[*i])
        .map(|(i, &s)| (i, s))
        .collect();
    if n < cand.len() && n > 0 {
        cand.select_nth_unstable_by(n - 1, rank_order);
    }
    cand.truncate(n);
    cand.sort_unstable_by(rank_order);
    let mut excluded = exclude.to_vec();
    excluded.sort_unstable();
    excluded.dedup();
    RankedList {
        items: cand,
        excluded,
    }
}
