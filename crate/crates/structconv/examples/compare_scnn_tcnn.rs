//! Size-matched SCNN vs TCNN on graph-coupled data: identical layer counts,
//! kernel extents, feature maps and head, differing only in the convolution
//! mask. A desk-scale version of the evaluation the full acceptance suite
//! runs over three seeds.

use structconv::analysis::rmse_report;
use structconv::data::{make_windows, split_contiguous, synth_coupled, SplitSpec, Standardizer};
use structconv::graph::five_node_example;
use structconv::models::{build_model, default_predictor_spec, forward, Family, Mode};
use structconv::optim::{train_epochs, AdamState, Stage, TrainConfig, TrainData};
use structconv::Rng;

fn run(family: Family, seed: u64) -> f64 {
    let graph = five_node_example();
    let series = synth_coupled(&graph, 8_000, seed, 0.05, 0.5, 0.5).unwrap();
    let (train, test, val) = split_contiguous(&series, &SplitSpec::default()).unwrap();
    let std = Standardizer::fit(&train).unwrap();
    let (window, horizon, stride) = (100, 20, 100);
    let train_w = make_windows(&std.transform(&train).unwrap(), window, horizon, stride).unwrap();
    let val_w = make_windows(&std.transform(&val).unwrap(), window, horizon, stride).unwrap();
    let test_w = make_windows(&std.transform(&test).unwrap(), window, horizon, stride).unwrap();
    let test_raw = make_windows(&test, window, horizon, stride).unwrap();

    let spec = default_predictor_spec(family, 5, 1, window, horizon, 1);
    let cfg = TrainConfig {
        epochs: 15,
        seed,
        ..TrainConfig::default()
    };
    let mut rng = Rng::new(seed);
    let mut params = build_model(&spec, &graph, &mut rng).unwrap();
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
    train_epochs(&mut params, &spec, &data, &cfg, Stage::L1, &mut state, &mut rng).unwrap();

    let mut preds = Vec::new();
    for chunk in test_w.inputs().chunks(32) {
        let (outs, _) = forward(&params, &spec, chunk, Mode::Infer).unwrap();
        for o in outs {
            preds.push(std.inverse_transform_prediction(&o).unwrap());
        }
    }
    rmse_report(&preds, &test_raw.prediction_targets().unwrap())
        .unwrap()
        .aggregate_rmse
}

fn main() {
    let seed = 0;
    println!("training size-matched models on the same data (seed {seed})...");
    let scnn = run(Family::Scnn, seed);
    println!("scnn test RMSE: {scnn:.5}");
    let tcnn = run(Family::Tcnn, seed);
    println!("tcnn test RMSE: {tcnn:.5}");
    println!(
        "ratio scnn/tcnn = {:.3} (below 1.0 means the graph mask helps)",
        scnn / tcnn
    );
}
