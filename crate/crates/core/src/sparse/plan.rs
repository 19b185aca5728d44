use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::sparse::pattern::SparsityPattern;

/// One iteration of the block scheme: a seed, its dependents `D` (estimated
/// jointly, contains the seed) and conditioners `C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub seed: usize,
    /// Sorted; `D = {seed} ∪ top-m neighbors`.
    pub dependents: Vec<usize>,
    /// Sorted; `C = (N(seed) ∪ {seed}) \ D`.
    pub conditioners: Vec<usize>,
    /// Members of `D` that were still in the work list when this block was
    /// planned. Across all blocks these partition the item set.
    pub removed: Vec<usize>,
    /// `|N(seed)|`.
    pub neighbor_count: usize,
}

impl Block {
    /// `m_i = |D| - 1`.
    pub fn promoted(&self) -> usize {
        self.dependents.len() - 1
    }

    /// `sorted(D ∪ C)`.
    pub fn support(&self) -> Vec<usize> {
        let mut k: Vec<usize> = self
            .dependents
            .iter()
            .chain(&self.conditioners)
            .copied()
            .collect();
        k.sort_unstable();
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPlan {
    pub blocks: Vec<Block>,
    pub r: f64,
    pub m: usize,
}

impl BlockPlan {
    pub fn seeds(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.seed).collect()
    }

    /// `(block size |D ∪ C|, number of blocks)` sorted by size.
    pub fn size_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for b in &self.blocks {
            *hist.entry(b.neighbor_count + 1).or_insert(0usize) += 1;
        }
        hist.into_iter().collect()
    }
}

/// `round(r * degree)`, halves away from zero.
pub fn promoted_count(r: f64, degree: usize) -> usize {
    ((r * degree as f64).round() as usize).min(degree)
}

/// Plans the blocks.
///
/// The work list orders items by neighbor count (descending), then popularity
/// (descending), then index. Each round pops the head as a seed, promotes its
/// `round(r |N|)` strongest neighbors (ties: popularity, then index) into `D`,
/// and removes all of `D` from the list.
pub fn plan_blocks(pattern: &SparsityPattern, r: f64, popularity: &[usize]) -> Result<BlockPlan> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Config(format!("r must lie in [0, 1], got {r}")));
    }
    let m = pattern.dim();
    if popularity.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: popularity.len(),
        });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        pattern
            .degree(b)
            .cmp(&pattern.degree(a))
            .then(popularity[b].cmp(&popularity[a]))
            .then(a.cmp(&b))
    });

    let mut in_list = vec![true; m];
    let mut blocks = Vec::new();
    for &seed in &order {
        if !in_list[seed] {
            continue;
        }
        let nbrs = pattern.neighbors(seed);
        let take = promoted_count(r, nbrs.len());
        let mut ranked: Vec<_> = nbrs.to_vec();
        ranked.sort_by(|a, b| {
            b.weight
                .partial_cmp(&a.weight)
                .unwrap_or(Ordering::Equal)
                .then(popularity[b.item].cmp(&popularity[a.item]))
                .then(a.item.cmp(&b.item))
        });
        let mut dependents: Vec<usize> = std::iter::once(seed)
            .chain(ranked[..take].iter().map(|n| n.item))
            .collect();
        let mut conditioners: Vec<usize> = ranked[take..].iter().map(|n| n.item).collect();
        dependents.sort_unstable();
        conditioners.sort_unstable();

        let mut removed = Vec::new();
        for &d in &dependents {
            if in_list[d] {
                in_list[d] = false;
                removed.push(d);
            }
        }
        blocks.push(Block {
            seed,
            dependents,
            conditioners,
            removed,
            neighbor_count: nbrs.len(),
        });
    }
    Ok(BlockPlan { blocks, r, m })
}

/// `sum over seeds of (1 + |N(seed)|)^omega`.
pub fn block_cost_estimate(plan: &BlockPlan, omega: f64) -> f64 {
    plan.blocks
        .iter()
        .map(|b| (1.0 + b.neighbor_count as f64).powf(omega))
        .sum()
}
