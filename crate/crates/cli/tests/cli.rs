use std::path::{Path, PathBuf};
use std::process::Command;

use gmrf_cli::{cmd_train, evaluate_model, fit, recommend, CliError, EvalConfig, Filters, TrainConfig};
use gmrf_core::ingest::{load_interactions, InteractionMatrix, LoadOptions};
use gmrf_core::metrics::Metric;
use gmrf_core::model::{ModelFile, SplitParams};
use gmrf_core::SolverKind;
use gmrf_testkit::{make_clustered, ClusteredSpec};
use tempfile::TempDir;

fn gmrf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmrf"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn binary() -> LoadOptions {
    LoadOptions {
        binarize: true,
        ..LoadOptions::default()
    }
}

fn two_item_config() -> TrainConfig {
    TrainConfig {
        lambda: 1.0,
        alpha: 0.0,
        center: false,
        split: None,
        ..TrainConfig::default()
    }
}

const TWO_ITEMS: &str = "u1,a\nu1,b\nu2,a\nu3,b\n";

#[test]
fn two_item_fixture_gives_one_third() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", TWO_ITEMS);
    let model_path = dir.path().join("m.gmrf");
    cmd_train(&two_item_config(), &data, &binary(), &model_path).unwrap();
    let model = ModelFile::load(&model_path).unwrap();
    assert_eq!(model.items, ["a", "b"]);
    for (j, i) in [(0, 1), (1, 0)] {
        assert!((model.weights.get(j, i) - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!(model.weights.diagonal_is_exact_zero());
    assert!(dir.path().join("m.gmrf.report").exists());

    let query = load_interactions(write(&dir, "q.csv", "u9,a\nu8,zzz\n"), &binary()).unwrap();
    let out = recommend(&model, &query, 5, ',').unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "user_id,rank,item_id,score");
    let u9: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&u9[..3], ["u9", "1", "b"]);
    assert!((u9[3].parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    // no known items: all-zero scores in index order, no padding beyond 2
    assert_eq!(&lines[2..], ["u8,1,a,0", "u8,2,b,0"]);
}

fn clustered_csv(dir: &TempDir, seed: u64) -> (PathBuf, InteractionMatrix) {
    let mat = make_clustered(&ClusteredSpec {
        n_users: 300,
        n_items: 30,
        n_clusters: 3,
        items_per_user: 8,
        in_cluster: 0.8,
        seed,
    });
    let mut text = String::new();
    for (u, i, _) in mat.iter() {
        text.push_str(&format!("{},{}\n", mat.users().id(u), mat.items().id(i)));
    }
    (write(dir, "data.csv", &text), mat)
}

#[test]
fn sparse_node_wise_matches_dense() {
    let dir = TempDir::new().unwrap();
    let (_, mat) = clustered_csv(&dir, 1);
    let dense_cfg = TrainConfig {
        lambda: 5.0,
        ..TrainConfig::default()
    };
    let (dense, _) = fit(&mat, &dense_cfg).unwrap();
    let sparse_cfg = TrainConfig {
        solver: SolverKind::Sparse,
        target_density: 1.0,
        r: 0.0,
        ..dense_cfg
    };
    let (sparse, report) = fit(&mat, &sparse_cfg).unwrap();
    assert_eq!(report.n_seeds, Some(30));
    assert_eq!(report.pattern_nnz, Some(30 * 29));
    assert!(dense.weights.max_abs_diff(&sparse.weights) <= 1e-8);
}

#[test]
fn invalid_r_exits_with_config_error_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", TWO_ITEMS);
    let model = dir.path().join("bad.gmrf");
    let out = gmrf()
        .args(["train", "--solver", "sparse", "--r", "1.5", "--data"])
        .arg(&data)
        .arg("--model")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r must lie in [0, 1]"));
    assert!(!model.exists());
    assert!(!dir.path().join("bad.gmrf.report").exists());
}

#[test]
fn exit_codes_by_category() {
    let dir = TempDir::new().unwrap();
    let bad_row = write(&dir, "bad.csv", "u1,a\nu2\n");
    let out = gmrf()
        .args(["train", "--all-users", "--data"])
        .arg(&bad_row)
        .arg("--model")
        .arg(dir.path().join("m.gmrf"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // identical items with no ridge: singular Gram
    let twins = write(&dir, "twins.csv", "u1,a\nu1,b\nu2,a\nu2,b\nu3,c\n");
    let out = gmrf()
        .args(["train", "--all-users", "--lambda", "0", "--alpha", "0", "--no-center", "--data"])
        .arg(&twins)
        .arg("--model")
        .arg(dir.path().join("m.gmrf"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

/// Users hold exactly one of ten item pairs, so every fold-in item predicts
/// its held-out partner.
fn paired_data(dir: &TempDir) -> PathBuf {
    let mut text = String::new();
    for u in 0..400 {
        let k = u % 10;
        text.push_str(&format!("u{u},a{k}\nu{u},b{k}\n"));
    }
    write(dir, "pairs.csv", &text)
}

#[test]
fn perfect_oracle_scores_one() {
    let dir = TempDir::new().unwrap();
    let data = paired_data(&dir);
    let model_path = dir.path().join("m.gmrf");
    let cfg = TrainConfig {
        lambda: 1.0,
        ..TrainConfig::default()
    };
    cmd_train(&cfg, &data, &binary(), &model_path).unwrap();
    let model = ModelFile::load(&model_path).unwrap();
    let mat = load_interactions(&data, &binary()).unwrap();
    let eval = EvalConfig {
        ks: vec![1, 5],
        ..EvalConfig::default()
    };
    let report = evaluate_model(&model, &mat, &eval).unwrap();
    assert_eq!(report.n_users, 40);
    for row in &report.rows {
        assert_eq!(row.mean, 1.0, "{}@{}", row.metric, row.k);
        assert_eq!(row.stderr, 0.0);
    }
    assert!(report.get(Metric::Recall, 5).is_some());
}

#[test]
fn evaluate_cli_writes_deterministic_report() {
    let dir = TempDir::new().unwrap();
    let (data, _) = clustered_csv(&dir, 2);
    let model = dir.path().join("m.gmrf");
    let out = gmrf()
        .args(["--threads", "2", "train", "--lambda", "10", "--data"])
        .arg(&data)
        .arg("--model")
        .arg(&model)
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("r{run}.tsv"));
        let res = gmrf()
            .args(["evaluate", "--k", "5,10", "--data"])
            .arg(&data)
            .arg("--model")
            .arg(&model)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(res.status.success());
        assert!(String::from_utf8_lossy(&res.stdout).contains("ndcg@5"));
        reports.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert!(reports[0].contains("metric\tk\tmean\tstderr\tn_users\n"));
    assert!(reports[0].contains("# solver=dense\n"));
}

#[test]
fn disjoint_items_are_rejected() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", TWO_ITEMS);
    let model_path = dir.path().join("m.gmrf");
    cmd_train(&two_item_config(), &data, &binary(), &model_path).unwrap();
    let model = ModelFile::load(&model_path).unwrap();
    let other = load_interactions(write(&dir, "o.csv", "x1,p\nx1,q\nx2,p\nx2,q\n"), &binary()).unwrap();

    let err = recommend(&model, &other, 3, ',').unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let cfg = EvalConfig {
        split: Some(SplitParams {
            val_frac: 0.0,
            test_frac: 0.5,
            fold_in_frac: 0.5,
            seed: 0,
        }),
        ..EvalConfig::default()
    };
    assert!(matches!(evaluate_model(&model, &other, &cfg), Err(CliError::Phase { phase: "align", .. })));
}

#[test]
fn inspect_shows_header_and_report() {
    let dir = TempDir::new().unwrap();
    let (data, _) = clustered_csv(&dir, 3);
    let model = dir.path().join("s.gmrf");
    let out = gmrf()
        .args(["train", "--solver", "sparse", "--density", "0.2", "--r", "0.5", "--data"])
        .arg(&data)
        .arg("--model")
        .arg(&model)
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = gmrf().arg("inspect").arg(&model).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["gmrf-model 1", "solver sparse", "r 0.5", "seeds ", "block_sizes ", "time_solve "] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
}

#[test]
fn filters_are_recorded_and_reapplied() {
    let dir = TempDir::new().unwrap();
    let (data, _) = clustered_csv(&dir, 4);
    let model_path = dir.path().join("m.gmrf");
    let cfg = TrainConfig {
        filters: Filters {
            min_user_items: 6,
            min_item_users: 20,
        },
        ..TrainConfig::default()
    };
    cmd_train(&cfg, &data, &binary(), &model_path).unwrap();
    let header = ModelFile::load_header(&model_path).unwrap();
    assert_eq!((header.min_user_items, header.min_item_users), (6, 20));
    let out = dir.path().join("r.tsv");
    gmrf_cli::cmd_evaluate(&model_path, &data, &binary(), &EvalConfig::default(), &out).unwrap();
    assert!(Path::new(&out).exists());
}
