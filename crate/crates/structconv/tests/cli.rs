//! Integration tests for the command-line surface: every subcommand, the
//! documented output files, exit codes, and config-echo reproducibility.

use std::path::{Path, PathBuf};

use structconv::cli;
use structconv::data::{save_csv, synth_coupled};
use structconv::graph::five_node_example;

fn run(args: &[&str]) -> i32 {
    cli::run(args.iter().map(|s| s.to_string()))
}

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    graph: PathBuf,
}

fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data.csv");
    let graph = root.join("adjacency.csv");
    let g = five_node_example();
    let series = synth_coupled(&g, 1200, 5, 0.05, 0.5, 0.5).unwrap();
    save_csv(&series, &data).unwrap();
    g.save_csv(&graph).unwrap();
    Setup {
        _dir: dir,
        root,
        data,
        graph,
    }
}

fn train_args<'a>(s: &'a Setup, out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut args: Vec<String> = [
        "train",
        "--data",
        s.data.to_str().unwrap(),
        "--graph",
        s.graph.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--window",
        "60",
        "--horizon",
        "10",
        "--stride",
        "30",
        "--epochs",
        "2",
        "--seed",
        "3",
        "--encoder_layers",
        "sc(5,4),relu,bn,pool(2),flatten,fc(16),relu,fc(out)",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

#[test]
fn full_pipeline_produces_documented_files() {
    let s = setup();
    let out = s.root.join("run");
    assert_eq!(cli::run(train_args(&s, &out, &[])), 0);
    assert!(out.join("model.scnv").exists());
    assert!(out.join("train.log.csv").exists());
    assert!(out.join("resolved.config").exists());
    assert!(!out.join(".lock").exists(), "lock released");

    let log = std::fs::read_to_string(out.join("train.log.csv")).unwrap();
    assert!(log.starts_with("epoch,stage,train_loss,val_loss,l1_lambda,wall_seconds"));
    assert_eq!(log.lines().count(), 3); // header + 2 epochs

    let shared = [
        "--data",
        s.data.to_str().unwrap(),
        "--graph",
        s.graph.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--window",
        "60",
        "--horizon",
        "10",
        "--stride",
        "30",
    ];

    let mut eval = vec!["evaluate"];
    eval.extend_from_slice(&shared);
    assert_eq!(run(&eval), 0);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,index,value"));
    assert!(metrics.contains("aggregate_rmse"));
    assert!(metrics.contains("per_step_rmse,9,"));

    let mut predict = vec!["predict"];
    predict.extend_from_slice(&shared);
    predict.extend_from_slice(&["--predict_offsets", "0,30"]);
    assert_eq!(run(&predict), 0);
    assert!(out.join("predictions_0.csv").exists());
    assert!(out.join("predictions_30.csv").exists());
    let pred = structconv::data::load_csv(&out.join("predictions_0.csv")).unwrap();
    assert_eq!(pred.shape(), (10, 5, 1));

    let mut rec = vec!["recurrence"];
    rec.extend_from_slice(&shared);
    rec.extend_from_slice(&["--rec_layer", "1", "--rec_node", "0", "--rec_points", "50"]);
    assert_eq!(run(&rec), 0);
    assert!(out.join("recurrence.csv").exists());
    let pgm = std::fs::read_to_string(out.join("recurrence.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n50 50\n255\n"));

    let mut kernels = vec!["export-kernels"];
    kernels.extend_from_slice(&shared);
    kernels.extend_from_slice(&["--kernel_layer", "0"]);
    assert_eq!(run(&kernels), 0);
    for i in 0..5 {
        assert!(out.join(format!("kernels/node_{i}.pgm")).exists());
    }
}

#[test]
fn generate_writes_series_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let code = run(&[
        "generate",
        "--out_dir",
        out.to_str().unwrap(),
        "--gen_len",
        "400",
        "--seed",
        "9",
    ]);
    assert_eq!(code, 0);
    let series = structconv::data::load_csv(&out.join("data.csv")).unwrap();
    assert_eq!(series.shape(), (400, 5, 1));
    let graph = structconv::Graph::load_csv(&out.join("adjacency.csv")).unwrap();
    assert_eq!(graph.f(), 5);
}

#[test]
fn same_seed_training_is_bitwise_identical() {
    let s = setup();
    let out_a = s.root.join("a");
    let out_b = s.root.join("b");
    assert_eq!(cli::run(train_args(&s, &out_a, &[])), 0);
    assert_eq!(cli::run(train_args(&s, &out_b, &[])), 0);
    assert_eq!(
        std::fs::read(out_a.join("model.scnv")).unwrap(),
        std::fs::read(out_b.join("model.scnv")).unwrap()
    );
}

#[test]
fn echoed_config_reproduces_the_checkpoint() {
    let s = setup();
    let out_a = s.root.join("a");
    assert_eq!(cli::run(train_args(&s, &out_a, &[])), 0);

    // Re-run purely from the echoed config, into a fresh directory.
    let out_b = s.root.join("b");
    let code = run(&[
        "train",
        "--config",
        out_a.join("resolved.config").to_str().unwrap(),
        "--out_dir",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(out_a.join("model.scnv")).unwrap(),
        std::fs::read(out_b.join("model.scnv")).unwrap()
    );
}

#[test]
fn evaluate_rejects_mismatched_graph() {
    let s = setup();
    let out = s.root.join("run");
    assert_eq!(cli::run(train_args(&s, &out, &[])), 0);

    // A different (complete) graph with the same node count.
    let other = s.root.join("other.csv");
    let mut rows = vec![vec![1.0; 5]; 5];
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] = 2.0;
    }
    structconv::Graph::validate(&rows)
        .unwrap()
        .save_csv(&other)
        .unwrap();

    let code = run(&[
        "evaluate",
        "--data",
        s.data.to_str().unwrap(),
        "--graph",
        other.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--window",
        "60",
        "--horizon",
        "10",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn missing_files_exit_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = run(&[
        "train",
        "--data",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--graph",
        dir.path().join("nope2.csv").to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);

    let code = run(&["train", "--out_dir", out.to_str().unwrap()]);
    assert_eq!(code, 1); // data key unset
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "generate",
        "--out_dir",
        dir.path().join("g").to_str().unwrap(),
        "--gen_lenn",
        "10",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn gradcheck_passes_and_exits_zero() {
    let code = run(&["gradcheck"]);
    assert_eq!(code, 0);
}

#[test]
fn scae_training_runs_two_stages() {
    let s = setup();
    let out = s.root.join("scae");
    let code = run(&[
        "train",
        "--data",
        s.data.to_str().unwrap(),
        "--graph",
        s.graph.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--family",
        "scae",
        "--window",
        "40",
        "--stride",
        "40",
        "--epochs",
        "2",
        "--patience",
        "1",
        "--min_delta",
        "1e9",
        "--encoder_layers",
        "sc(5,4),relu,pool(2),sc(3,4),relu",
        "--decoder_layers",
        "tconv(3,4),relu,unpool(2),tconv(5,1)",
    ]);
    assert_eq!(code, 0);
    let log = std::fs::read_to_string(out.join("train.log.csv")).unwrap();
    assert!(log.contains(",plain,"));
    assert!(log.contains(",l1,"));

    // Reconstruction metrics on the test split.
    let code = run(&[
        "evaluate",
        "--data",
        s.data.to_str().unwrap(),
        "--graph",
        s.graph.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--window",
        "40",
        "--stride",
        "40",
        "--family",
        "scae",
    ]);
    assert_eq!(code, 0);
    assert!(out.join("metrics.csv").exists());
}
