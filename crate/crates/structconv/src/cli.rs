//! The `structconv` command set, built entirely on the library API so the
//! binary stays a thin dispatcher.
//!
//! ```text
//! structconv <generate|train|evaluate|predict|recurrence|export-kernels|gradcheck>
//!            --config <path> [--key value ...]
//! ```
//!
//! Command-line flags override config-file values. Every command locks its
//! output directory, writes the fully resolved configuration there as
//! `resolved.config`, and is deterministic given (config, seed). Exit codes:
//! 0 success, 1 validation failure, 2 runtime failure.

use std::path::{Path, PathBuf};

use crate::analysis::{
    export_heatmap, recurrence, rmse_report, HeatmapFormat, RecurrenceMatrix,
};
use crate::config::{load_pairs, RunConfig};
use crate::data::{
    load_csv, make_windows, save_csv, split_contiguous, synth_coupled, Standardizer,
};
use crate::error::{Error, Result};
use crate::fdcheck;
use crate::graph::{five_node_example, Graph};
use crate::models::{
    build_model, checkpoint, fingerprint, forward, forward_one, Family, LayerParams, Mode,
    ModelParams, ModelSpec,
};
use crate::optim::{
    train_epochs, train_scae_two_stage, AdamState, Stage, TrainData, TrainLog,
};
use crate::rng::Rng;
use crate::tensor::SeriesTensor;

/// Exclusive lock on an output directory, released on drop. Concurrent
/// commands on one directory are refused.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::OutputLocked { path })
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write_echo(cfg: &RunConfig) -> Result<()> {
    std::fs::write(cfg.out_dir.join("resolved.config"), cfg.echo())?;
    Ok(())
}

fn require_path(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path.clone().ok_or_else(|| Error::ConfigError {
        key: key.to_string(),
        message: "required by this command".into(),
    })?;
    if !p.exists() {
        return Err(Error::MissingFile { path: p });
    }
    Ok(p)
}

fn load_graph(cfg: &RunConfig) -> Result<Graph> {
    Graph::load_csv(&require_path(&cfg.graph, "graph")?)
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("model.scnv"))
}

/// Load a checkpoint and confirm it matches the configured graph (when one
/// is configured).
fn load_matching_checkpoint(cfg: &RunConfig) -> Result<(ModelSpec, Graph, ModelParams)> {
    let path = checkpoint_path(cfg);
    if !path.exists() {
        return Err(Error::MissingFile { path });
    }
    let (spec, graph, params) = checkpoint::load_checkpoint(&path)?;
    if let Some(graph_path) = &cfg.graph {
        let configured = Graph::load_csv(graph_path)?;
        if fingerprint(&spec, &configured) != params.fingerprint {
            return Err(Error::CheckpointMismatch {
                context: "configured graph differs from the checkpoint's graph".into(),
            });
        }
    }
    Ok((spec, graph, params))
}

struct Pipeline {
    train: SeriesTensor,
    test: SeriesTensor,
    validation: SeriesTensor,
    standardizer: Standardizer,
}

fn pipeline(cfg: &RunConfig) -> Result<Pipeline> {
    let series = load_csv(&require_path(&cfg.data, "data")?);
    let series = series?;
    let (train, test, validation) = split_contiguous(&series, &cfg.split_spec())?;
    let standardizer = Standardizer::fit(&train)?;
    Ok(Pipeline {
        train,
        test,
        validation,
        standardizer,
    })
}

/// Window/horizon used for dataset construction; reconstruction models only
/// consume the input windows, so they use a minimal horizon.
fn data_horizon(family: Family, horizon: usize) -> usize {
    if family.is_predictor() {
        horizon
    } else {
        1
    }
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    write_echo(cfg)?;
    let graph = match &cfg.graph {
        Some(path) => Graph::load_csv(path)?,
        None => five_node_example(),
    };
    let series = synth_coupled(
        &graph,
        cfg.gen_len,
        cfg.seed,
        cfg.gen_noise_sd,
        cfg.gen_coupling,
        cfg.gen_amplitude,
    )?;
    save_csv(&series, &cfg.out_dir.join("data.csv"))?;
    graph.save_csv(&cfg.out_dir.join("adjacency.csv"))?;
    println!(
        "generated {} steps x {} nodes -> {}",
        cfg.gen_len,
        graph.f(),
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    write_echo(cfg)?;
    let graph = load_graph(cfg)?;
    let p = pipeline(cfg)?;
    let train_std = p.standardizer.transform(&p.train)?;
    let val_std = p.standardizer.transform(&p.validation)?;

    let horizon = data_horizon(cfg.family, cfg.horizon);
    let train_w = make_windows(&train_std, cfg.window, horizon, cfg.stride)?;
    let val_w = make_windows(&val_std, cfg.window, horizon, cfg.stride)?;

    let (_, f, n) = p.train.shape();
    let spec = cfg.model_spec(f, n)?;
    let mut rng = Rng::new(cfg.seed);
    let mut params = build_model(&spec, &graph, &mut rng)?;
    let tc = cfg.train_config();
    let mut adam = AdamState::new(&params, &tc);

    let train_inputs = train_w.inputs();
    let val_inputs = val_w.inputs();
    let log: TrainLog = if cfg.family.is_predictor() {
        let train_targets = train_w.prediction_targets()?;
        let val_targets = val_w.prediction_targets()?;
        let data = TrainData {
            train_inputs: &train_inputs,
            train_targets: &train_targets,
            val_inputs: &val_inputs,
            val_targets: &val_targets,
        };
        let stage = if tc.l1_lambda > 0.0 { Stage::L1 } else { Stage::Plain };
        train_epochs(&mut params, &spec, &data, &tc, stage, &mut adam, &mut rng)?
    } else {
        let data = TrainData {
            train_inputs: &train_inputs,
            train_targets: &train_inputs,
            val_inputs: &val_inputs,
            val_targets: &val_inputs,
        };
        train_scae_two_stage(&mut params, &spec, &data, &tc, &mut adam, &mut rng)?
    };

    log.write_csv(&cfg.out_dir.join("train.log.csv"))?;
    checkpoint::save_checkpoint(&params, &spec, &graph, &cfg.out_dir.join("model.scnv"))?;
    if let Some(last) = log.records.last() {
        println!(
            "trained {} epochs: train {:.6} val {:.6} -> {}",
            log.records.len(),
            last.train_loss,
            last.val_loss,
            cfg.out_dir.display()
        );
    }
    Ok(())
}

/// Forward every test window, inverse-transform the predictions, and score
/// them against original-unit targets.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    write_echo(cfg)?;
    let (spec, _graph, params) = load_matching_checkpoint(cfg)?;
    let p = pipeline(cfg)?;
    let test_std = p.standardizer.transform(&p.test)?;

    let horizon = data_horizon(spec.family, spec.horizon);
    let windows_std = make_windows(&test_std, spec.window, horizon, cfg.stride)?;
    let windows_raw = make_windows(&p.test, spec.window, horizon, cfg.stride)?;

    let mut preds = Vec::with_capacity(windows_std.len());
    for chunk in windows_std.inputs().chunks(32) {
        let (outs, _) = forward(&params, &spec, chunk, Mode::Infer)?;
        for o in outs {
            preds.push(if spec.family.is_predictor() {
                p.standardizer.inverse_transform_prediction(&o)?
            } else {
                p.standardizer.inverse_transform(&o)?
            });
        }
    }
    let targets: Vec<SeriesTensor> = if spec.family.is_predictor() {
        windows_raw.prediction_targets()?
    } else {
        windows_raw.inputs()
    };
    let report = rmse_report(&preds, &targets)?;
    report.write_csv(&cfg.out_dir.join("metrics.csv"))?;
    println!(
        "evaluate: {} windows, rmse {:.6}, r2 {:.6}",
        preds.len(),
        report.aggregate_rmse,
        report.r_squared
    );
    Ok(())
}

/// Emit the predicted `[H, F]` CSV for each configured window offset into
/// the test split.
pub fn cmd_predict(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    write_echo(cfg)?;
    let (spec, _graph, params) = load_matching_checkpoint(cfg)?;
    if !spec.family.is_predictor() {
        return Err(Error::ConfigError {
            key: "family".into(),
            message: "predict needs an scnn or tcnn checkpoint".into(),
        });
    }
    let p = pipeline(cfg)?;
    let test_std = p.standardizer.transform(&p.test)?;
    for &offset in &cfg.predict_offsets {
        let window = test_std.slice_time(offset, spec.window)?;
        let (out, _) = forward_one(&params, &spec, &window, Mode::Infer)?;
        let pred = p.standardizer.inverse_transform_prediction(&out)?;
        save_csv(&pred, &cfg.out_dir.join(format!("predictions_{offset}.csv")))?;
    }
    println!(
        "predicted {} offsets -> {}",
        cfg.predict_offsets.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Activation vectors of one node at one layer, across consecutive
/// non-overlapping test windows, until `limit` time points are collected.
fn collect_activations(
    params: &ModelParams,
    spec: &ModelSpec,
    test_std: &SeriesTensor,
    layer: usize,
    node: usize,
    limit: usize,
) -> Result<Vec<Vec<f64>>> {
    if layer >= spec.layer_count() {
        return Err(Error::ConfigError {
            key: "rec_layer".into(),
            message: format!("model has {} layers", spec.layer_count()),
        });
    }
    let mut acts: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0;
    while acts.len() < limit && offset + spec.window <= test_std.t_len() {
        let window = test_std.slice_time(offset, spec.window)?;
        let (_, cache) = forward_one(params, spec, &window, Mode::Infer)?;
        let outs = cache.layer_output(layer).expect("layer index checked");
        let out = &outs[0];
        let (t_len, f, c) = out.shape();
        if f <= node {
            return Err(Error::ConfigError {
                key: "rec_node".into(),
                message: format!("layer {layer} output has {f} nodes"),
            });
        }
        for tau in 0..t_len {
            if acts.len() == limit {
                break;
            }
            acts.push((0..c).map(|ch| out.get(tau, node, ch)).collect());
        }
        offset += spec.window;
    }
    if acts.is_empty() {
        return Err(Error::TooShort {
            t_len: test_std.t_len(),
            needed: spec.window,
        });
    }
    Ok(acts)
}

fn write_recurrence_csv(r: &RecurrenceMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..r.n() {
        let row: Vec<&str> = (0..r.n()).map(|j| if r.at(i, j) { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn cmd_recurrence(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    write_echo(cfg)?;
    let (spec, _graph, params) = load_matching_checkpoint(cfg)?;
    let p = pipeline(cfg)?;
    let test_std = p.standardizer.transform(&p.test)?;
    let acts = collect_activations(
        &params,
        &spec,
        &test_std,
        cfg.rec_layer,
        cfg.rec_node,
        cfg.rec_points,
    )?;
    let r = recurrence(&acts, cfg.rec_epsilon)?;
    write_recurrence_csv(&r, &cfg.out_dir.join("recurrence.csv"))?;
    export_heatmap(
        &r.to_f64(),
        r.n(),
        r.n(),
        &cfg.out_dir.join("recurrence.pgm"),
        HeatmapFormat::Pgm,
    )?;
    println!(
        "recurrence: {} points at layer {} node {} -> {}",
        r.n(),
        cfg.rec_layer,
        cfg.rec_node,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Per-node sub-kernel heatmaps of one convolution layer: rows are temporal
/// offsets, columns flatten (node j, channel, feature map).
pub fn cmd_export_kernels(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    write_echo(cfg)?;
    let (_spec, _graph, params) = load_matching_checkpoint(cfg)?;
    let kernel = match params.layers.get(cfg.kernel_layer) {
        Some(LayerParams::Conv(k)) => k,
        Some(LayerParams::TransposeConv { kernel, .. }) => kernel,
        _ => {
            return Err(Error::ConfigError {
                key: "kernel_layer".into(),
                message: format!("layer {} is not a convolution", cfg.kernel_layer),
            })
        }
    };
    let dir = cfg.out_dir.join("kernels");
    std::fs::create_dir_all(&dir)?;
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
        export_heatmap(
            &matrix,
            t,
            f * n * m,
            &dir.join(format!("node_{i}.pgm")),
            HeatmapFormat::Pgm,
        )?;
    }
    println!("exported {f} sub-kernel heatmaps -> {}", dir.display());
    Ok(())
}

/// Run the finite-difference audit over every layer kind; nonzero exit when
/// any layer exceeds the tolerance.
pub fn cmd_gradcheck(_cfg: &RunConfig) -> Result<i32> {
    let checks = fdcheck::run_all();
    let mut worst = 0.0f64;
    for c in &checks {
        println!(
            "{:<16} max relative error {:.3e}  {}",
            c.name,
            c.max_rel_err,
            if c.passed() { "PASS" } else { "FAIL" }
        );
        worst = worst.max(c.max_rel_err);
    }
    println!("tolerance {:.1e}, worst {:.3e}", fdcheck::FD_TOLERANCE, worst);
    Ok(if checks.iter().all(|c| c.passed()) { 0 } else { 1 })
}

const USAGE: &str = "usage: structconv <generate|train|evaluate|predict|recurrence|export-kernels|gradcheck> [--config <path>] [--key value ...]";

/// Parse arguments (program name excluded), run the command, and return the
/// process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    match dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch<I: IntoIterator<Item = String>>(args: I) -> Result<i32> {
    let mut args = args.into_iter();
    let command = args.next().ok_or_else(|| Error::Usage(USAGE.into()))?;
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut config_path: Option<PathBuf> = None;
    while let Some(flag) = args.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::Usage(format!("expected --key, got {flag:?}")))?;
        let value = args
            .next()
            .ok_or_else(|| Error::Usage(format!("--{key} needs a value")))?;
        if key == "config" {
            config_path = Some(PathBuf::from(value));
        } else {
            pairs.push((key.to_string(), value));
        }
    }
    let mut all_pairs = match &config_path {
        Some(path) => load_pairs(path)?,
        None => Vec::new(),
    };
    all_pairs.extend(pairs);
    let cfg = RunConfig::resolve(&all_pairs)?;

    match command.as_str() {
        "generate" => cmd_generate(&cfg).map(|()| 0),
        "train" => cmd_train(&cfg).map(|()| 0),
        "evaluate" => cmd_evaluate(&cfg).map(|()| 0),
        "predict" => cmd_predict(&cfg).map(|()| 0),
        "recurrence" => cmd_recurrence(&cfg).map(|()| 0),
        "export-kernels" => cmd_export_kernels(&cfg).map(|()| 0),
        "gradcheck" => cmd_gradcheck(&cfg),
        _ => Err(Error::Usage(USAGE.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_refuses_second_acquire() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            DirLock::acquire(dir.path()),
            Err(Error::OutputLocked { .. })
        ));
        drop(a);
        let b = DirLock::acquire(dir.path());
        assert!(b.is_ok());
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let code = run(["frobnicate".to_string()]);
        assert_eq!(code, 1);
    }

    #[test]
    fn missing_value_is_usage_error() {
        let code = run(["train".to_string(), "--seed".to_string()]);
        assert_eq!(code, 1);
    }
}
