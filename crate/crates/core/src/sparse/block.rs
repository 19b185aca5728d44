use crate::error::{Error, Result};
use crate::linalg::{principal_submatrix, Cholesky};
use crate::preprocess::GramMatrix;

/// Estimates for the columns `D` of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimates {
    /// `(column i, [(row j, B_ji)])` for every `i ∈ D`, `j ∈ K \ {i}`.
    pub columns: Vec<(usize, Vec<(usize, f64)>)>,
    /// Diagonal boost that was added to make the block factorizable.
    pub boost: f64,
}

/// Inverts `S[K; K]` with `K = D ∪ C` and reads off `B_ji = -C_ji / C_ii`
/// for each `i ∈ D` and every other `j ∈ K`.
///
/// Only the columns of the inverse that belong to `D` are formed. The local
/// order puts `C` before `D`, which shortens their forward solves.
pub fn solve_block(s: &GramMatrix, dependents: &[usize], conditioners: &[usize]) -> Result<BlockEstimates> {
    solve_block_with_boost(s, dependents, conditioners, 0.0)
}

/// [`solve_block`] with `boost` added to the submatrix diagonal.
pub fn solve_block_with_boost(
    s: &GramMatrix,
    dependents: &[usize],
    conditioners: &[usize],
    boost: f64,
) -> Result<BlockEstimates> {
    if dependents.is_empty() {
        return Err(Error::Config("block has no dependents".into()));
    }
    let mut support: Vec<usize> = dependents.iter().chain(conditioners).copied().collect();
    support.sort_unstable();
    if support.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(
            "dependents and conditioners overlap or repeat".into(),
        ));
    }
    if let Some(&bad) = support.last().filter(|&&k| k >= s.dim()) {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: bad + 1,
        });
    }
    let local: Vec<usize> = sorted(conditioners).into_iter().chain(sorted(dependents)).collect();
    let mut sub = principal_submatrix(&s.s, &local);
    if boost != 0.0 {
        for k in 0..local.len() {
            sub[(k, k)] += boost;
        }
    }
    let chol = Cholesky::factor(&sub).map_err(|f| Error::NotPositiveDefinite {
        context: format!(
            "block seeded at item {} ({} items)",
            dependents[0],
            support.len()
        ),
        pivot: local[f.pivot],
        pivot_value: f.value,
    })?;

    let first = conditioners.len();
    let columns = local[first..]
        .iter()
        .enumerate()
        .map(|(t, &i)| {
            let pos = first + t;
            let col = chol.inverse_column(pos);
            let d = col[pos];
            let est = local
                .iter()
                .zip(&col)
                .filter(|(&j, _)| j != i)
                .map(|(&j, &c)| (j, -c / d))
                .collect();
            (i, est)
        })
        .collect();
    Ok(BlockEstimates { columns, boost })
}

fn sorted(items: &[usize]) -> Vec<usize> {
    let mut v = items.to_vec();
    v.sort_unstable();
    v
}
