use log::warn;

use crate::error::{Error, Result};
use crate::preprocess::GramMatrix;

/// Default maximum number of neighbors kept per column.
pub const DEFAULT_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub item: usize,
    /// `|S_lambda[item, column]|`, strictly positive.
    pub weight: f64,
}

/// Column-oriented candidate edge set obtained by thresholding `|S_lambda|`.
///
/// Column `i` lists `N(i)` sorted by item index. After per-column capping the
/// pattern may be asymmetric; it is used as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    neighbors: Vec<Vec<Neighbor>>,
    pub target_density: f64,
    pub cap: usize,
    /// Absolute-value threshold actually applied (`inf` for an empty pattern).
    pub threshold: f64,
}

impl SparsityPattern {
    /// Pattern from explicit neighbor lists. Self-loops and non-positive
    /// weights are rejected; lists are sorted by index.
    pub fn from_neighbors(mut neighbors: Vec<Vec<Neighbor>>) -> Result<Self> {
        let m = neighbors.len();
        let mut cap = 0;
        for (i, list) in neighbors.iter_mut().enumerate() {
            list.sort_by_key(|n| n.item);
            for n in list.iter() {
                if n.item == i || n.item >= m {
                    return Err(Error::Data(format!("invalid neighbor {} of column {i}", n.item)));
                }
                if !(n.weight > 0.0) {
                    return Err(Error::Data(format!(
                        "neighbor weight must be positive (column {i}, item {})",
                        n.item
                    )));
                }
            }
            if list.windows(2).any(|w| w[0].item == w[1].item) {
                return Err(Error::Data(format!("duplicate neighbor in column {i}")));
            }
            cap = cap.max(list.len());
        }
        let entries: usize = neighbors.iter().map(Vec::len).sum();
        let target_density = if m > 1 {
            entries as f64 / (m * (m - 1)) as f64
        } else {
            0.0
        };
        Ok(SparsityPattern {
            neighbors,
            target_density,
            cap: cap.max(1),
            threshold: 0.0,
        })
    }

    /// Every off-diagonal pair, each weighted by `|S_ji|` (zeros become the
    /// smallest positive weight so the pattern stays complete).
    pub fn complete(s: &GramMatrix) -> Self {
        let m = s.dim();
        let neighbors = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&j| j != i)
                    .map(|j| Neighbor {
                        item: j,
                        weight: s.s[(j, i)].abs().max(f64::MIN_POSITIVE),
                    })
                    .collect()
            })
            .collect();
        SparsityPattern {
            neighbors,
            target_density: 1.0,
            cap: m.saturating_sub(1).max(1),
            threshold: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn nnz(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, j: usize, i: usize) -> bool {
        self.neighbors[i].binary_search_by_key(&j, |n| n.item).is_ok()
    }
}

/// Thresholds `|S_lambda|` so that about `target_density` of the off-diagonal
/// entries survive, then caps each column at its `cap` largest entries.
///
/// The threshold is the `k`-th largest absolute off-diagonal value over the
/// upper triangle, `k = round(target_density * m (m - 1) / 2)`. Entries tied
/// with the threshold are kept; exact zeros never are. Capping prefers larger
/// `|S|`, then lower index.
pub fn build_pattern(s: &GramMatrix, target_density: f64, cap: usize) -> Result<SparsityPattern> {
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(Error::Config(format!(
            "target density must lie in (0, 1], got {target_density}"
        )));
    }
    if cap == 0 {
        return Err(Error::Config("neighbor cap must be at least 1".into()));
    }
    let m = s.dim();
    let mut upper: Vec<f64> = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for j in 0..m {
        for i in 0..j {
            upper.push(s.s[(i, j)].abs());
        }
    }
    let k = (target_density * upper.len() as f64).round() as usize;
    let threshold = if k == 0 {
        f64::INFINITY
    } else {
        let (_, kth, _) = upper.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        *kth
    };

    let mut neighbors = Vec::with_capacity(m);
    for i in 0..m {
        let col = s.s.column(i);
        let mut list: Vec<Neighbor> = (0..m)
            .filter(|&j| j != i)
            .map(|j| Neighbor {
                item: j,
                weight: col[j].abs(),
            })
            .filter(|n| n.weight > 0.0 && n.weight >= threshold)
            .collect();
        if list.len() > cap {
            list.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.item.cmp(&b.item)));
            list.truncate(cap);
            list.sort_by_key(|n| n.item);
        }
        neighbors.push(list);
    }
    let pattern = SparsityPattern {
        neighbors,
        target_density,
        cap,
        threshold,
    };
    if pattern.nnz() == 0 && m > 1 {
        warn!("sparsity pattern is empty (all off-diagonal covariances are zero or below threshold)");
    }
    Ok(pattern)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn gram(rows: &[f64], m: usize) -> GramMatrix {
        GramMatrix::from_matrix(DMatrix::from_row_slice(m, m, rows), 1.0, 1).unwrap()
    }

    #[test]
    fn quantile_keeps_strongest_pair() {
        let s = gram(&[1.0, 0.9, 0.5, 0.9, 1.0, -0.1, 0.5, -0.1, 1.0], 3);
        let p = build_pattern(&s, 1.0 / 3.0, 10).unwrap();
        assert_eq!(p.nnz(), 2);
        assert!(p.contains(1, 0) && p.contains(0, 1));
        assert_eq!(p.neighbors(0)[0].weight, 0.9);
        assert_eq!(p.threshold, 0.9);
    }

    #[test]
    fn full_density_is_complete_minus_diagonal() {
        let s = gram(&[1.0, 0.9, 0.5, 0.9, 1.0, -0.1, 0.5, -0.1, 1.0], 3);
        let p = build_pattern(&s, 1.0, 10).unwrap();
        assert_eq!(p.nnz(), 6);
        assert!((0..3).all(|i| !p.contains(i, i)));
        let capped = build_pattern(&s, 1.0, 1).unwrap();
        assert_eq!(capped.neighbors(2)[0].item, 0);
        assert_eq!(capped.nnz(), 3);
    }

    #[test]
    fn cap_keeps_largest() {
        let m = 6;
        let mut s = DMatrix::identity(m, m);
        let w = [0.1, 0.5, 0.3, 0.4, 0.2];
        for (k, &v) in w.iter().enumerate() {
            s[(k + 1, 0)] = v;
            s[(0, k + 1)] = v;
        }
        let s = GramMatrix::from_matrix(s, 1.0, 1).unwrap();
        let p = build_pattern(&s, 1.0, 2).unwrap();
        let kept: Vec<usize> = p.neighbors(0).iter().map(|n| n.item).collect();
        assert_eq!(kept, vec![2, 4]);
        // zeros between the other items are never neighbors
        assert_eq!(p.degree(3), 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = gram(&[1.0, 0.0, 0.0, 1.0], 2);
        assert!(build_pattern(&s, 0.0, 5).is_err());
        assert!(build_pattern(&s, 1.5, 5).is_err());
        assert!(build_pattern(&s, 0.5, 0).is_err());
        let empty = build_pattern(&s, 1.0, 5).unwrap();
        assert_eq!(empty.nnz(), 0);
    }

    #[test]
    fn explicit_neighbors_are_validated() {
        let n = |item, weight| Neighbor { item, weight };
        assert!(SparsityPattern::from_neighbors(vec![vec![n(0, 1.0)], vec![]]).is_err());
        assert!(SparsityPattern::from_neighbors(vec![vec![n(1, 0.0)], vec![]]).is_err());
        let p = SparsityPattern::from_neighbors(vec![vec![n(1, 1.0)], vec![]]).unwrap();
        assert_eq!(p.target_density, 0.5);
    }
}
