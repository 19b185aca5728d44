//! Sparse approximation: threshold `|S_lambda|` into a candidate edge set,
//! plan blocks of jointly estimated columns, invert one small submatrix per
//! block, and average overlapping estimates.
//!
//! `r = 0` is node-wise regression on each item's neighborhood; `r = 1` on a
//! complete pattern is a single full inversion.

pub mod block;
pub mod pattern;
pub mod plan;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::GramMatrix;
use crate::weights::{SolverKind, SparseColumns, WeightMatrix};

pub use block::{solve_block, solve_block_with_boost, BlockEstimates};
pub use pattern::{build_pattern, Neighbor, SparsityPattern, DEFAULT_CAP};
pub use plan::{block_cost_estimate, plan_blocks, Block, BlockPlan};

/// Block estimates per `(row, column)` entry, kept in arrival order.
#[derive(Debug, Clone, Default)]
pub struct EstimateAccumulator {
    /// `columns[i]` holds `(row, estimate)` pairs for column `i`.
    columns: Vec<Vec<(usize, f64)>>,
}

impl EstimateAccumulator {
    pub fn new(m: usize) -> Self {
        EstimateAccumulator {
            columns: vec![Vec::new(); m],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.columns[col].push((row, value));
    }

    pub fn add_block(&mut self, est: &BlockEstimates) {
        for (i, col) in &est.columns {
            self.columns[*i].extend_from_slice(col);
        }
    }

    /// Appends another accumulator's estimates after this one's. Sums are
    /// order-dependent in floating point, so merge shards in a fixed order.
    pub fn merge(&mut self, other: EstimateAccumulator) {
        for (mine, theirs) in self.columns.iter_mut().zip(other.columns) {
            mine.extend(theirs);
        }
    }

    pub fn count(&self, row: usize, col: usize) -> usize {
        self.columns[col].iter().filter(|e| e.0 == row).count()
    }

    /// Number of estimates received.
    pub fn len(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.iter().all(Vec::is_empty)
    }

    /// `(row, col, mean estimate)` sorted by column, then row. Estimates are
    /// summed in arrival order; an entry whose estimates are all bitwise
    /// equal keeps that value (a plain mean would round, e.g. seven copies
    /// of 0.1).
    pub fn finalize(self) -> Vec<(usize, usize, f64)> {
        let m = self.columns.len();
        let mut sum = vec![0.0; m];
        let mut count = vec![0u32; m];
        let mut first = vec![0.0f64; m];
        let mut uniform = vec![true; m];
        let mut touched = Vec::new();
        let mut out = Vec::new();
        for (i, col) in self.columns.into_iter().enumerate() {
            for (j, v) in col {
                if count[j] == 0 {
                    touched.push(j);
                    first[j] = v;
                } else if v.to_bits() != first[j].to_bits() {
                    uniform[j] = false;
                }
                sum[j] += v;
                count[j] += 1;
            }
            touched.sort_unstable();
            for &j in &touched {
                let value = if uniform[j] { first[j] } else { sum[j] / count[j] as f64 };
                out.push((j, i, value));
                sum[j] = 0.0;
                count[j] = 0;
                uniform[j] = true;
            }
            touched.clear();
        }
        out
    }
}

/// Output of [`solve_sparse`].
#[derive(Debug, Clone)]
pub struct SparseFit {
    pub weights: WeightMatrix,
    pub plan: BlockPlan,
    /// Seeds whose block needed the diagonal boost.
    pub boosted_seeds: Vec<usize>,
}

/// Plans blocks, solves them in parallel, and averages the estimates.
///
/// Block results are accumulated in seed order, so the output is identical
/// for any thread count. A block that fails to factor is retried once with
/// `10 lambda / n` added to its diagonal.
pub fn solve_sparse(
    s: &GramMatrix,
    pattern: &SparsityPattern,
    r: f64,
    popularity: &[usize],
) -> Result<SparseFit> {
    let m = s.dim();
    if pattern.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: pattern.dim(),
        });
    }
    let plan = plan_blocks(pattern, r, popularity)?;
    let boost = 10.0 * s.lambda / s.n as f64;
    let results: Vec<Result<BlockEstimates>> = plan
        .blocks
        .par_iter()
        .map(|b| match solve_block(s, &b.dependents, &b.conditioners) {
            Err(Error::NotPositiveDefinite { .. }) if boost > 0.0 => {
                warn!(
                    "block seeded at item {} is singular; retrying with diagonal boost {boost:e}",
                    b.seed
                );
                solve_block_with_boost(s, &b.dependents, &b.conditioners, boost)
            }
            other => other,
        })
        .collect();

    let mut acc = EstimateAccumulator::new(m);
    let mut boosted_seeds = Vec::new();
    for (b, res) in plan.blocks.iter().zip(results) {
        let est = res?;
        if est.boost != 0.0 {
            boosted_seeds.push(b.seed);
        }
        acc.add_block(&est);
    }
    let cols = SparseColumns::from_triplets(m, acc.finalize())?;
    let mut weights = WeightMatrix::sparse(m, cols, SolverKind::Sparse, s.lambda);
    weights.r = Some(r);
    weights.target_density = Some(pattern.target_density);
    Ok(SparseFit {
        weights,
        plan,
        boosted_seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn accumulator_averages() {
        let mut a = EstimateAccumulator::new(2);
        a.add(1, 0, 1.0);
        a.add(1, 0, 3.0);
        let mut b = EstimateAccumulator::new(2);
        b.add(1, 0, 2.0);
        b.add(0, 1, 5.0);
        a.merge(b);
        assert_eq!(a.count(1, 0), 3);
        assert_eq!(a.finalize(), vec![(1, 0, 2.0), (0, 1, 5.0)]);
    }

    #[test]
    fn identical_estimates_average_to_themselves() {
        let mut a = EstimateAccumulator::new(4);
        for _ in 0..7 {
            a.add(2, 3, 0.1);
        }
        assert_eq!(a.finalize()[0].2, 0.1);
    }

    #[test]
    fn two_item_sparse_matches_closed_form() {
        let s = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]) / 3.0;
        let s = GramMatrix::from_matrix(s, 1.0, 3).unwrap();
        let p = build_pattern(&s, 1.0, 10).unwrap();
        for r in [0.0, 1.0] {
            let fit = solve_sparse(&s, &p, r, &[1, 1]).unwrap();
            assert!((fit.weights.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
            assert!(fit.weights.diagonal_is_exact_zero());
            assert!(fit.boosted_seeds.is_empty());
        }
    }

    #[test]
    fn singular_block_is_boosted() {
        // items 0 and 1 identical
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.2, 1.0, 1.0, 0.2, 0.2, 0.2, 1.0]);
        let s = GramMatrix::from_matrix(s, 1.0, 10).unwrap();
        let p = build_pattern(&s, 1.0, 10).unwrap();
        let fit = solve_sparse(&s, &p, 0.0, &[0; 3]).unwrap();
        assert_eq!(fit.boosted_seeds.len(), 3);
        assert!(fit.weights.triplets().iter().all(|t| t.2.is_finite()));

        let no_ridge = GramMatrix { lambda: 0.0, ..s };
        assert!(matches!(
            solve_sparse(&no_ridge, &p, 0.0, &[0; 3]),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
