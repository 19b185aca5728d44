//! Ranking metrics under strong generalization.
//!
//! * `Recall@k = hits in top k / min(k, |relevant|)`
//! * `nDCG@k = DCG@k / IDCG@k` with binary gains and `1 / log2(p + 1)`
//!   discounts at 1-based rank `p`.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{HeldOutUser, InteractionMatrix};
use crate::preprocess::PreprocessStats;
use crate::scoring::{top_n, RankedList, Scorer, UserVector};
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Ndcg,
    Recall,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ndcg => "ndcg",
            Metric::Recall => "recall",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_relevant(relevant: &HashSet<usize>) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::Data("relevant item set is empty".into()));
    }
    Ok(())
}

pub fn recall_at_k(ranked: &RankedList, relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let hits = ranked.item_ids().take(k).filter(|i| relevant.contains(i)).count();
    let denom = k.min(relevant.len());
    Ok(if denom == 0 { 0.0 } else { hits as f64 / denom as f64 })
}

pub fn ndcg_at_k(ranked: &RankedList, relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let discount = |p: usize| 1.0 / ((p + 1) as f64).log2();
    let dcg: f64 = ranked
        .item_ids()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(p, _)| discount(p + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    Ok(if idcg == 0.0 { 0.0 } else { dcg / idcg })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: Metric,
    pub k: usize,
    pub mean: f64,
    /// Sample standard deviation over users divided by `sqrt(n_users)`.
    pub stderr: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub rows: Vec<MetricSummary>,
    pub n_users: usize,
    /// Free-form `key = value` configuration lines echoed into the report.
    pub echo: Vec<(String, String)>,
}

impl MetricReport {
    pub fn get(&self, metric: Metric, k: usize) -> Option<&MetricSummary> {
        self.rows.iter().find(|r| r.metric == metric && r.k == k)
    }

    /// Flat machine-readable form: `#`-prefixed echo lines, then a
    /// tab-separated `metric k mean stderr n_users` table.
    pub fn to_flat(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.echo {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("metric\tk\tmean\tstderr\tn_users\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.metric, r.k, r.mean, r.stderr, r.n_users
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>8} {:>8}   ({} users)", "metric", "mean", "stderr", self.n_users);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>8.4} {:>8.4}",
                format!("{}@{}", r.metric, r.k),
                r.mean,
                r.stderr
            );
        }
        out
    }
}

/// One evaluated user: ranking input and relevant targets.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub fold_in: UserVector,
    pub held_out: Vec<usize>,
}

/// Scores each case from its fold-in items, excludes them from the ranking,
/// and scores the ranking against the held-out items for every `k` in `ks`.
pub fn evaluate_cases(scorer: &Scorer<'_>, cases: &[EvalCase], ks: &[usize]) -> Result<MetricReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("metric cutoffs must be positive".into()));
    }
    if cases.is_empty() {
        return Err(Error::Data("no users to evaluate".into()));
    }
    let kmax = *ks.iter().max().unwrap();
    let per_user: Vec<Result<Vec<(f64, f64)>>> = cases
        .par_iter()
        .map(|case| {
            if case.held_out.is_empty() {
                return Err(Error::Data("evaluated user has no held-out items".into()));
            }
            let scores = scorer.scores(&case.fold_in);
            let exclude: Vec<usize> = case.fold_in.items().collect();
            let ranked = top_n(&scores, &exclude, kmax);
            let relevant: HashSet<usize> = case.held_out.iter().copied().collect();
            ks.iter()
                .map(|&k| Ok((ndcg_at_k(&ranked, &relevant, k)?, recall_at_k(&ranked, &relevant, k)?)))
                .collect()
        })
        .collect();
    let per_user = per_user.into_iter().collect::<Result<Vec<_>>>()?;

    let n = per_user.len();
    let summarize = |metric: Metric, k: usize, vals: Vec<f64>| {
        let mean = vals.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MetricSummary {
            metric,
            k,
            mean,
            stderr,
            n_users: n,
        }
    };
    let mut rows = Vec::new();
    for (ki, &k) in ks.iter().enumerate() {
        rows.push(summarize(Metric::Ndcg, k, per_user.iter().map(|u| u[ki].0).collect()));
    }
    for (ki, &k) in ks.iter().enumerate() {
        rows.push(summarize(Metric::Recall, k, per_user.iter().map(|u| u[ki].1).collect()));
    }
    Ok(MetricReport {
        rows,
        n_users: n,
        echo: Vec::new(),
    })
}

/// [`evaluate_cases`] for held-out users of `mat`, whose item indices match
/// the model's.
pub fn evaluate(
    b: &WeightMatrix,
    users: &[HeldOutUser],
    mat: &InteractionMatrix,
    stats: &PreprocessStats,
    center: bool,
    ks: &[usize],
) -> Result<MetricReport> {
    if mat.n_items() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: mat.n_items(),
        });
    }
    let scorer = Scorer::new(b, stats, center)?;
    let cases = users
        .iter()
        .map(|h| {
            let fold = h.fold_in.iter().map(|&i| (i, mat.value(h.user, i))).collect();
            Ok(EvalCase {
                fold_in: UserVector::new(b.dim(), fold)?,
                held_out: h.held_out.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_cases(&scorer, &cases, ks)
}
