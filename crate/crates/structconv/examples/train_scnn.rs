//! End-to-end predictor training on synthetic data: generate, split,
//! standardize, window, train a small SCNN, and report test RMSE in
//! original units.

use structconv::analysis::rmse_report;
use structconv::data::{make_windows, split_contiguous, synth_coupled, SplitSpec, Standardizer};
use structconv::graph::five_node_example;
use structconv::models::{build_model, forward, Family, LayerSpec, Mode, ModelSpec};
use structconv::optim::{train_epochs, AdamState, Stage, TrainConfig, TrainData};
use structconv::Rng;

fn main() {
    let graph = five_node_example();
    let series = synth_coupled(&graph, 6_000, 1, 0.05, 0.5, 0.5).expect("generator config");
    let (train, test, val) = split_contiguous(&series, &SplitSpec::default()).expect("split");
    let std = Standardizer::fit(&train).expect("non-constant features");

    let (window, horizon, stride) = (100, 20, 50);
    let train_w = make_windows(&std.transform(&train).unwrap(), window, horizon, stride).unwrap();
    let val_w = make_windows(&std.transform(&val).unwrap(), window, horizon, stride).unwrap();
    let test_w = make_windows(&std.transform(&test).unwrap(), window, horizon, stride).unwrap();
    let test_raw = make_windows(&test, window, horizon, stride).unwrap();
    println!(
        "windows: {} train, {} val, {} test",
        train_w.len(),
        val_w.len(),
        test_w.len()
    );

    let spec = ModelSpec {
        family: Family::Scnn,
        f: 5,
        n_channels: 1,
        window,
        horizon,
        encoder: vec![
            LayerSpec::StructuralConv { t: 9, m_out: 16, hop_k: 1 },
            LayerSpec::Relu,
            LayerSpec::BatchNorm,
            LayerSpec::MaxPool { p: 2 },
            LayerSpec::Flatten,
            LayerSpec::FullyConnected { out_dim: 128 },
            LayerSpec::Relu,
            LayerSpec::FullyConnected { out_dim: horizon * 5 },
        ],
        decoder: vec![],
    };
    let cfg = TrainConfig {
        epochs: 10,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut rng = Rng::new(cfg.seed);
    let mut params = build_model(&spec, &graph, &mut rng).expect("spec shape-checks");
    let mut state = AdamState::new(&params, &cfg);

    let train_inputs = train_w.inputs();
    let train_targets = train_w.prediction_targets().unwrap();
    let val_inputs = val_w.inputs();
    let val_targets = val_w.prediction_targets().unwrap();
    let data = TrainData {
        train_inputs: &train_inputs,
        train_targets: &train_targets,
        val_inputs: &val_inputs,
        val_targets: &val_targets,
    };
    let log = train_epochs(&mut params, &spec, &data, &cfg, Stage::L1, &mut state, &mut rng)
        .expect("training runs");
    for r in &log.records {
        println!(
            "epoch {:>2}  train {:.5}  val {:.5}  ({:.2}s)",
            r.epoch, r.train_loss, r.val_loss, r.wall_seconds
        );
    }

    // Predictions back in original units before scoring.
    let mut preds = Vec::new();
    for chunk in test_w.inputs().chunks(32) {
        let (outs, _) = forward(&params, &spec, chunk, Mode::Infer).unwrap();
        for o in outs {
            preds.push(std.inverse_transform_prediction(&o).unwrap());
        }
    }
    let report = rmse_report(&preds, &test_raw.prediction_targets().unwrap()).unwrap();
    println!(
        "\ntest RMSE {:.5}, R^2 {:.4}",
        report.aggregate_rmse, report.r_squared
    );
    println!(
        "per-step RMSE: first {:.5} ... last {:.5} (degrades with horizon)",
        report.per_step_rmse[0],
        report.per_step_rmse[report.per_step_rmse.len() - 1]
    );
}
