//! Train / evaluate / recommend / inspect commands over `gmrf-core`.
//!
//! Every command is a plain function so it can be driven from tests; the
//! `gmrf` binary only parses flags and maps errors to exit codes
//! (2 configuration, 3 data, 4 numerical failure).

// NaN-rejecting range checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gmrf_core::dense::{solve_dense, solve_dense_mean_constrained};
use gmrf_core::ingest::{load_interactions, split_strong_generalization};
use gmrf_core::metrics::{evaluate_cases, EvalCase, MetricReport};
use gmrf_core::model::{ModelFile, ModelHeader, SplitParams, FORMAT_VERSION};
use gmrf_core::preprocess::{compute_stats, gram, transform};
use gmrf_core::scoring::{top_n, Scorer, UserVector};
use gmrf_core::sparse::{block_cost_estimate, build_pattern, solve_sparse, DEFAULT_CAP};
use gmrf_core::{ErrorCategory, InteractionMatrix, LoadOptions, SolverKind};
use log::{info, warn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: gmrf_core::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Write { .. } => 3,
            CliError::Phase { source, .. } => match source.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            },
        }
    }
}

trait PhaseExt<T> {
    fn phase(self, phase: &'static str) -> Result<T, CliError>;
}

impl<T> PhaseExt<T> for gmrf_core::Result<T> {
    fn phase(self, phase: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Phase { phase, source })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Filters {
    pub min_user_items: usize,
    pub min_item_users: usize,
}

/// Loads interactions and applies the activity filters.
pub fn load_data(path: &Path, opts: &LoadOptions, filters: Filters) -> Result<InteractionMatrix, CliError> {
    let mat = load_interactions(path, opts).phase("load")?;
    if filters.min_user_items > 1 || filters.min_item_users > 1 {
        return mat
            .filter_min_counts(filters.min_user_items, filters.min_item_users)
            .phase("filter");
    }
    Ok(mat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub center: bool,
    pub solver: SolverKind,
    /// Sparse solver only.
    pub target_density: f64,
    /// Sparse solver only.
    pub cap: usize,
    /// Sparse solver only.
    pub r: f64,
    /// Exponent for the reported block cost estimate.
    pub omega: f64,
    /// `None` trains on every user; otherwise validation and test users are
    /// held out.
    pub split: Option<SplitParams>,
    pub filters: Filters,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 100.0,
            alpha: 0.75,
            center: true,
            solver: SolverKind::Dense,
            target_density: 0.005,
            cap: DEFAULT_CAP,
            r: 0.5,
            omega: 3.0,
            split: Some(SplitParams {
                val_frac: 0.1,
                test_frac: 0.1,
                fold_in_frac: 0.8,
                seed: 0,
            }),
            filters: Filters::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.solver == SolverKind::Sparse {
            if !(self.target_density > 0.0 && self.target_density <= 1.0) {
                return bad(format!("density must lie in (0, 1], got {}", self.target_density));
            }
            if self.cap == 0 {
                return bad("cap must be at least 1".into());
            }
            if !(0.0..=1.0).contains(&self.r) {
                return bad(format!("r must lie in [0, 1], got {}", self.r));
            }
            if !(self.omega > 0.0) {
                return bad(format!("omega must be positive, got {}", self.omega));
            }
        }
        if let Some(s) = &self.split {
            let unit = |x: f64| x > 0.0 && x < 1.0;
            if !(s.val_frac >= 0.0 && s.test_frac >= 0.0 && unit(s.val_frac + s.test_frac)) {
                return bad(format!(
                    "need 0 < val_frac + test_frac < 1 (got {} + {})",
                    s.val_frac, s.test_frac
                ));
            }
            if !unit(s.fold_in_frac) {
                return bad(format!("fold_in_frac must lie in (0, 1), got {}", s.fold_in_frac));
            }
        }
        Ok(())
    }
}

/// Diagnostics of one training run. Wall times are not part of the model
/// file, which stays byte-reproducible.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub phases: Vec<(&'static str, Duration)>,
    pub n_users: usize,
    pub n_train_users: usize,
    pub n_items: usize,
    pub weight_density: f64,
    pub weight_nnz: usize,
    pub pattern_nnz: Option<usize>,
    pub n_seeds: Option<usize>,
    /// `(block size, count)`.
    pub block_sizes: Vec<(usize, usize)>,
    pub cost_estimate: Option<f64>,
    pub boosted_blocks: usize,
}

impl TrainReport {
    pub fn phase_time(&self, name: &str) -> Option<Duration> {
        self.phases.iter().find(|p| p.0 == name).map(|p| p.1)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "users {} (train {})", self.n_users, self.n_train_users);
        let _ = writeln!(out, "items {}", self.n_items);
        for (name, d) in &self.phases {
            let _ = writeln!(out, "time_{name} {:.6}s", d.as_secs_f64());
        }
        let _ = writeln!(out, "weights_nnz {}", self.weight_nnz);
        let _ = writeln!(out, "weights_density {:.6}", self.weight_density);
        if let Some(p) = self.pattern_nnz {
            let _ = writeln!(out, "pattern_nnz {p}");
        }
        if let Some(s) = self.n_seeds {
            let _ = writeln!(out, "seeds {s}");
        }
        if let Some(c) = self.cost_estimate {
            let _ = writeln!(out, "cost_estimate {c:e}");
        }
        if !self.block_sizes.is_empty() {
            let hist: Vec<String> = self.block_sizes.iter().map(|(s, c)| format!("{s}:{c}")).collect();
            let _ = writeln!(out, "block_sizes {}", hist.join(" "));
        }
        if self.boosted_blocks > 0 {
            let _ = writeln!(out, "boosted_blocks {}", self.boosted_blocks);
        }
        out
    }
}

struct Stopwatch {
    phases: Vec<(&'static str, Duration)>,
    last: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            phases: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, name: &'static str) {
        let now = Instant::now();
        self.phases.push((name, now - self.last));
        self.last = now;
    }
}

/// Trains a model on an in-memory matrix: split, preprocess, solve.
pub fn fit(mat: &InteractionMatrix, cfg: &TrainConfig) -> Result<(ModelFile, TrainReport), CliError> {
    cfg.validate()?;
    let mut clock = Stopwatch::new();
    let train = match &cfg.split {
        Some(s) => {
            let split =
                split_strong_generalization(mat, s.val_frac, s.test_frac, s.fold_in_frac, s.seed)
                    .phase("split")?;
            mat.select_users(&split.train_users)
        }
        None => mat.clone(),
    };
    clock.lap("split");

    let stats = compute_stats(&train, cfg.alpha).phase("preprocess")?;
    let transformed = transform(&train, &stats, cfg.center).phase("preprocess")?;
    let s = gram(&transformed, cfg.lambda).phase("gram")?;
    clock.lap("gram");

    let mut report = TrainReport {
        n_users: mat.n_users(),
        n_train_users: train.n_users(),
        n_items: mat.n_items(),
        ..Default::default()
    };
    let mut weights = match cfg.solver {
        SolverKind::Dense => solve_dense(&s).phase("solve")?,
        SolverKind::DenseMeanConstrained => {
            solve_dense_mean_constrained(&s, &stats.scaled_means()).phase("solve")?
        }
        SolverKind::Sparse => {
            let pattern = build_pattern(&s, cfg.target_density, cfg.cap).phase("pattern")?;
            clock.lap("pattern");
            let fit = solve_sparse(&s, &pattern, cfg.r, &train.item_counts()).phase("solve")?;
            report.pattern_nnz = Some(pattern.nnz());
            report.n_seeds = Some(fit.plan.blocks.len());
            report.block_sizes = fit.plan.size_histogram();
            report.cost_estimate = Some(block_cost_estimate(&fit.plan, cfg.omega));
            report.boosted_blocks = fit.boosted_seeds.len();
            fit.weights
        }
    };
    clock.lap("solve");
    weights.alpha = Some(cfg.alpha);
    report.weight_nnz = weights.nnz();
    report.weight_density = weights.density();

    let sparse = cfg.solver == SolverKind::Sparse;
    let header = ModelHeader {
        version: FORMAT_VERSION,
        m: mat.n_items(),
        nnz: 0,
        solver: cfg.solver,
        lambda: cfg.lambda,
        alpha: cfg.alpha,
        center: cfg.center,
        r: sparse.then_some(cfg.r),
        target_density: sparse.then_some(cfg.target_density),
        cap: sparse.then_some(cfg.cap),
        n_train_users: train.n_users(),
        min_user_items: cfg.filters.min_user_items,
        min_item_users: cfg.filters.min_item_users,
        split: cfg.split,
    };
    let model = ModelFile::new(header, mat.items().ids().to_vec(), stats, weights).phase("persist")?;
    report.phases = clock.phases;
    Ok((model, report))
}

pub fn report_path(model_path: &Path) -> PathBuf {
    let mut p = model_path.as_os_str().to_owned();
    p.push(".report");
    PathBuf::from(p)
}

/// Loads data, trains, and writes the model plus a `<model>.report` sidecar.
/// Nothing is written unless training succeeds.
pub fn cmd_train(
    cfg: &TrainConfig,
    data: &Path,
    opts: &LoadOptions,
    model_out: &Path,
) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    let t0 = Instant::now();
    let mat = load_data(data, opts, cfg.filters)?;
    let load_time = t0.elapsed();
    let (model, mut report) = fit(&mat, cfg)?;
    report.phases.insert(0, ("load", load_time));
    let t1 = Instant::now();
    let bytes = model.to_bytes().phase("persist")?;
    write_file(model_out, &bytes)?;
    report.phases.push(("persist", t1.elapsed()));
    write_file(&report_path(model_out), report.to_text().as_bytes())?;
    info!(
        "trained {} model on {} users x {} items ({} weights)",
        cfg.solver, report.n_train_users, report.n_items, report.weight_nnz
    );
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Validation,
    Test,
}

impl std::str::FromStr for EvalSet {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "validation" => Ok(EvalSet::Validation),
            "test" => Ok(EvalSet::Test),
            other => Err(CliError::Config(format!("unknown evaluation set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Overrides the split recorded in the model header.
    pub split: Option<SplitParams>,
    pub ks: Vec<usize>,
    pub set: EvalSet,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: None,
            ks: vec![20, 50, 100],
            set: EvalSet::Test,
        }
    }
}

/// Dense index translation from a data file to a model's item table.
struct ItemAlignment {
    to_model: Vec<Option<usize>>,
}

impl ItemAlignment {
    fn new(model: &ModelFile, mat: &InteractionMatrix) -> Result<Self, CliError> {
        let index: BTreeMap<&str, usize> = model
            .items
            .iter()
            .enumerate()
            .map(|(k, id)| (id.as_str(), k))
            .collect();
        let to_model: Vec<Option<usize>> = mat
            .items()
            .ids()
            .iter()
            .map(|id| index.get(id.as_str()).copied())
            .collect();
        let known = to_model.iter().filter(|x| x.is_some()).count();
        if known == 0 {
            return Err(CliError::Phase {
                phase: "align",
                source: gmrf_core::Error::Data("no item in the data is known to the model".into()),
            });
        }
        if known < to_model.len() {
            warn!(
                "{} of {} items in the data are unknown to the model and ignored",
                to_model.len() - known,
                to_model.len()
            );
        }
        Ok(ItemAlignment { to_model })
    }

    fn user_vector(&self, mat: &InteractionMatrix, u: usize, items: Option<&[usize]>, m: usize) -> UserVector {
        let (idx, val) = mat.row(u);
        let entries = idx
            .iter()
            .zip(val)
            .filter(|(i, _)| items.is_none_or(|keep| keep.binary_search(i).is_ok()))
            .filter_map(|(&i, &v)| self.to_model[i].map(|k| (k, v)))
            .collect();
        UserVector::new(m, entries).expect("aligned items are valid")
    }

    fn map_items(&self, items: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = items.iter().filter_map(|&i| self.to_model[i]).collect();
        out.sort_unstable();
        out
    }
}

/// Evaluates a model on held-out users of a data file.
pub fn evaluate_model(
    model: &ModelFile,
    mat: &InteractionMatrix,
    cfg: &EvalConfig,
) -> Result<MetricReport, CliError> {
    let split_params = cfg.split.or(model.header.split).ok_or_else(|| {
        CliError::Config("model was trained on all users; pass split parameters explicitly".into())
    })?;
    let align = ItemAlignment::new(model, mat)?;
    let split = split_strong_generalization(
        mat,
        split_params.val_frac,
        split_params.test_frac,
        split_params.fold_in_frac,
        split_params.seed,
    )
    .phase("split")?;
    let held = match cfg.set {
        EvalSet::Validation => &split.validation,
        EvalSet::Test => &split.test,
    };
    let m = model.weights.dim();
    let mut skipped = 0;
    let cases: Vec<EvalCase> = held
        .iter()
        .filter_map(|h| {
            let held_out = align.map_items(&h.held_out);
            if held_out.is_empty() {
                skipped += 1;
                return None;
            }
            Some(EvalCase {
                fold_in: align.user_vector(mat, h.user, Some(&h.fold_in), m),
                held_out,
            })
        })
        .collect();
    if skipped > 0 {
        warn!("{skipped} held-out users have no held-out items known to the model");
    }
    let scorer = Scorer::new(&model.weights, &model.stats, model.header.center).phase("score")?;
    let mut report = evaluate_cases(&scorer, &cases, &cfg.ks).phase("evaluate")?;
    let h = &model.header;
    report.echo = vec![
        ("solver".into(), h.solver.to_string()),
        ("lambda".into(), h.lambda.to_string()),
        ("alpha".into(), h.alpha.to_string()),
        ("center".into(), h.center.to_string()),
        ("r".into(), h.r.map_or("-".into(), |v| v.to_string())),
        ("target_density".into(), h.target_density.map_or("-".into(), |v| v.to_string())),
        ("items".into(), h.m.to_string()),
        ("set".into(), format!("{:?}", cfg.set).to_lowercase()),
        ("seed".into(), split_params.seed.to_string()),
        (
            "ks".into(),
            cfg.ks.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        ),
    ];
    Ok(report)
}

/// Writes the flat report to `out` and returns it.
pub fn cmd_evaluate(
    model_path: &Path,
    data: &Path,
    opts: &LoadOptions,
    cfg: &EvalConfig,
    out: &Path,
) -> Result<MetricReport, CliError> {
    if cfg.ks.is_empty() || cfg.ks.contains(&0) {
        return Err(CliError::Config("metric cutoffs must be positive".into()));
    }
    let model = ModelFile::load(model_path).phase("load model")?;
    let filters = Filters {
        min_user_items: model.header.min_user_items,
        min_item_users: model.header.min_item_users,
    };
    let mat = load_data(data, opts, filters)?;
    let report = evaluate_model(&model, &mat, cfg)?;
    write_file(out, report.to_flat().as_bytes())?;
    Ok(report)
}

/// Top-`n` rows `user_id,rank,item_id,score` for every user in the data,
/// excluding items the user already has.
pub fn recommend(model: &ModelFile, mat: &InteractionMatrix, n: usize, delimiter: char) -> Result<String, CliError> {
    if n == 0 {
        return Err(CliError::Config("n must be at least 1".into()));
    }
    let align = ItemAlignment::new(model, mat)?;
    let m = model.weights.dim();
    let scorer = Scorer::new(&model.weights, &model.stats, model.header.center).phase("score")?;
    let users: Vec<UserVector> = (0..mat.n_users())
        .map(|u| align.user_vector(mat, u, None, m))
        .collect();
    let scores = scorer.scores_batch(&users);
    let d = delimiter;
    let mut out = format!("user_id{d}rank{d}item_id{d}score\n");
    for (u, (x, y)) in users.iter().zip(&scores).enumerate() {
        let seen: Vec<usize> = x.items().collect();
        let ranked = top_n(y, &seen, n);
        for (rank, (item, score)) in ranked.items.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}{d}{}{d}{}{d}{}",
                mat.users().id(u),
                rank + 1,
                model.items[*item],
                score
            );
        }
    }
    Ok(out)
}

pub fn cmd_recommend(
    model_path: &Path,
    data: &Path,
    opts: &LoadOptions,
    n: usize,
    out: &Path,
) -> Result<(), CliError> {
    let model = ModelFile::load(model_path).phase("load model")?;
    let mat = load_data(data, opts, Filters::default())?;
    let text = recommend(&model, &mat, n, opts.delimiter)?;
    write_file(out, text.as_bytes())
}

/// Header text, weight summary and, if present, the training report.
pub fn cmd_inspect(model_path: &Path) -> Result<String, CliError> {
    let model = ModelFile::load(model_path).phase("load model")?;
    let mut out = model.header.to_text();
    let _ = writeln!(out, "weights_density {:.6}", model.weights.density());
    let _ = writeln!(out, "diagonal_zero {}", model.weights.diagonal_is_exact_zero());
    if let Ok(report) = fs::read_to_string(report_path(model_path)) {
        out.push_str("-- training report --\n");
        out.push_str(&report);
    }
    Ok(out)
}
