//! Two-stage autoencoder training: plain reconstruction until the validation
//! loss plateaus, then L1 fine-tuning that drives most kernel weights toward
//! zero while reconstruction quality holds. Exports the first-layer
//! sub-kernel heatmaps at the end.

use structconv::analysis::{export_heatmap, overall_sparsity, sparsity_report, HeatmapFormat};
use structconv::data::{make_windows, split_contiguous, synth_coupled, SplitSpec, Standardizer};
use structconv::graph::five_node_example;
use structconv::models::{build_model, default_scae_spec, LayerParams};
use structconv::optim::{train_scae_two_stage, AdamState, TrainConfig, TrainData};
use structconv::Rng;

fn main() {
    let out = std::path::Path::new("example_out/train_scae");
    std::fs::create_dir_all(out).expect("create output dir");

    let graph = five_node_example();
    let series = synth_coupled(&graph, 4_000, 3, 0.05, 0.5, 0.5).unwrap();
    let (train, _, val) = split_contiguous(&series, &SplitSpec::default()).unwrap();
    let std = Standardizer::fit(&train).unwrap();
    let train_w = make_windows(&std.transform(&train).unwrap(), 100, 1, 50).unwrap();
    let val_w = make_windows(&std.transform(&val).unwrap(), 100, 1, 50).unwrap();

    let spec = default_scae_spec(5, 1, 100, 1);
    let cfg = TrainConfig {
        epochs: 20,
        alpha: 5e-4,
        l1_lambda: 1e-4,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut rng = Rng::new(cfg.seed);
    let mut params = build_model(&spec, &graph, &mut rng).unwrap();
    let mut state = AdamState::new(&params, &cfg);
    let train_inputs = train_w.inputs();
    let val_inputs = val_w.inputs();
    let data = TrainData {
        train_inputs: &train_inputs,
        train_targets: &train_inputs,
        val_inputs: &val_inputs,
        val_targets: &val_inputs,
    };

    let log = train_scae_two_stage(&mut params, &spec, &data, &cfg, &mut state, &mut rng)
        .expect("two-stage training");
    let boundary = log.stage_boundary.unwrap();
    for (i, r) in log.records.iter().enumerate() {
        let marker = if i == boundary { "  <- L1 stage begins" } else { "" };
        println!(
            "epoch {:>2} [{}] train {:.5} val {:.5}{marker}",
            r.epoch,
            r.stage.as_str(),
            r.train_loss,
            r.val_loss
        );
    }

    let report = sparsity_report(&params, 1e-3);
    println!("\nnear-zero (|w| < 1e-3) fraction over unmasked kernel weights:");
    for r in &report {
        println!(
            "  layer {:>2}: {:.3} ({} of {} unmasked, {} exactly zero)",
            r.layer, r.near_zero_fraction, r.near_zero_count, r.unmasked_count, r.exact_zero_count
        );
    }
    println!("  overall: {:.3}", overall_sparsity(&report));

    // First-layer sub-kernel heatmaps: rows are temporal offsets, columns
    // run over (neighbor node, feature map); masked pairs render as zero.
    let LayerParams::Conv(kernel) = &params.layers[0] else { panic!("layer 0 is a conv") };
    let (t, f, n, m) = (kernel.t(), kernel.f(), kernel.n_in(), kernel.m_out());
    for i in 0..f {
        let mut matrix = vec![0.0; t * f * n * m];
        for s in 0..t {
            for j in 0..f {
                for c in 0..n {
                    for mm in 0..m {
                        matrix[s * (f * n * m) + (j * n + c) * m + mm] =
                            kernel.weights()[kernel.w_idx(i, s, j, c, mm)];
                    }
                }
            }
        }
        let path = out.join(format!("node_{i}.pgm"));
        export_heatmap(&matrix, t, f * n * m, &path, HeatmapFormat::Pgm).unwrap();
    }
    println!("\nwrote {} sub-kernel heatmaps to {}", f, out.display());
}
