//! ADAM optimization with optional L1 shrinkage on convolution kernels,
//! epoch-level training loops, and the plain-then-L1 autoencoder schedule.
//!
//! The L1 subgradient `lambda * sign(w)` (with `sign(0) = 0`) applies to
//! convolution kernel weights only — never to biases, batchnorm scale/shift,
//! or fully connected weights. Masked kernel positions are skipped entirely,
//! so their weights and their ADAM moments stay bit-exact zero.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::models::{
    apply_bn_updates, backward, forward, GradSet, LayerGradSlot, LayerParams, Mode, ModelParams,
    ModelSpec,
};
use crate::rng::Rng;
use crate::tensor::SeriesTensor;

pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_ADAM_EPSILON: f64 = 1e-8;
pub const DEFAULT_L1_LAMBDA: f64 = 1e-4;
pub const DEFAULT_BATCH_COUNT: usize = 32;
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_PATIENCE: usize = 10;
pub const DEFAULT_MIN_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// The training set is shuffled and split into this many near-equal
    /// batches per epoch.
    pub batch_count: usize,
    /// When set, fixed-size batches override `batch_count`.
    pub batch_size: Option<usize>,
    pub l1_lambda: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_count: DEFAULT_BATCH_COUNT,
            batch_size: None,
            l1_lambda: DEFAULT_L1_LAMBDA,
            alpha: DEFAULT_ALPHA,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_ADAM_EPSILON,
            patience: DEFAULT_PATIENCE,
            min_delta: DEFAULT_MIN_DELTA,
            seed: 0,
        }
    }
}

/// First/second moments for one layer's two parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentSlot {
    Pair {
        m_a: Vec<f64>,
        v_a: Vec<f64>,
        m_b: Vec<f64>,
        v_b: Vec<f64>,
    },
    None,
}

/// Per-parameter ADAM moments plus the step counter and hyperparameters.
/// Moments at masked kernel positions are never touched and stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub layers: Vec<MomentSlot>,
    pub step: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams, cfg: &TrainConfig) -> AdamState {
        let layers = params
            .layers
            .iter()
            .map(|layer| match layer {
                LayerParams::Conv(k) => MomentSlot::Pair {
                    m_a: vec![0.0; k.weights().len()],
                    v_a: vec![0.0; k.weights().len()],
                    m_b: vec![0.0; k.bias().len()],
                    v_b: vec![0.0; k.bias().len()],
                },
                LayerParams::TransposeConv { kernel, bias } => MomentSlot::Pair {
                    m_a: vec![0.0; kernel.weights().len()],
                    v_a: vec![0.0; kernel.weights().len()],
                    m_b: vec![0.0; bias.len()],
                    v_b: vec![0.0; bias.len()],
                },
                LayerParams::BatchNorm(p) => MomentSlot::Pair {
                    m_a: vec![0.0; p.gamma.len()],
                    v_a: vec![0.0; p.gamma.len()],
                    m_b: vec![0.0; p.beta.len()],
                    v_b: vec![0.0; p.beta.len()],
                },
                LayerParams::Dense(d) => MomentSlot::Pair {
                    m_a: vec![0.0; d.w().len()],
                    v_a: vec![0.0; d.w().len()],
                    m_b: vec![0.0; d.b().len()],
                    v_b: vec![0.0; d.b().len()],
                },
                LayerParams::Stateless => MomentSlot::None,
            })
            .collect();
        AdamState {
            layers,
            step: 0,
            alpha: cfg.alpha,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }
}

/// Mean squared error over all entries, with its gradient
/// `2 (pred - target) / count`.
pub fn mse_loss(pred: &SeriesTensor, target: &SeriesTensor) -> Result<(f64, SeriesTensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            context: format!("mse: {:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    let count = pred.data().len() as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, (&p, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data().iter().zip(target.data()))
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}

#[inline]
fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct StepScale {
    alpha: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
}

#[inline]
fn update_one(w: &mut f64, g: f64, m: &mut f64, v: &mut f64, s: &StepScale) {
    *m = s.beta1 * *m + (1.0 - s.beta1) * g;
    *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
    let m_hat = *m / s.bc1;
    let v_hat = *v / s.bc2;
    *w -= s.alpha * m_hat / (v_hat.sqrt() + s.epsilon);
}

fn update_plain(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], s: &StepScale) {
    for k in 0..w.len() {
        update_one(&mut w[k], g[k], &mut m[k], &mut v[k], s);
    }
}

/// One bias-corrected ADAM step. `l1_lambda` shrinks convolution kernel
/// weights via the subgradient `g + lambda * sign(w)`; masked positions are
/// untouched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradSet,
    state: &mut AdamState,
    l1_lambda: f64,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() || state.layers.len() != params.layers.len() {
        return Err(Error::ShapeMismatch {
            context: "adam: grads / state do not match parameters".into(),
        });
    }
    state.step += 1;
    let s = StepScale {
        alpha: state.alpha,
        beta1: state.beta1,
        beta2: state.beta2,
        epsilon: state.epsilon,
        bc1: 1.0 - state.beta1.powi(state.step as i32),
        bc2: 1.0 - state.beta2.powi(state.step as i32),
    };
    for ((layer, grad), moments) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.layers.iter_mut())
    {
        match (layer, grad, moments) {
            (
                LayerParams::Conv(k),
                LayerGradSlot::Conv { d_w, d_b },
                MomentSlot::Pair { m_a, v_a, m_b, v_b },
            ) => {
                update_kernel(k, d_w, m_a, v_a, &s, l1_lambda)?;
                check_len(k.bias().len(), d_b.len())?;
                let b_len = k.bias().len();
                update_plain(&mut k.bias_mut()[..b_len], d_b, m_b, v_b, &s);
            }
            (
                LayerParams::TransposeConv { kernel, bias },
                LayerGradSlot::TransposeConv { d_w, d_b },
                MomentSlot::Pair { m_a, v_a, m_b, v_b },
            ) => {
                update_kernel(kernel, d_w, m_a, v_a, &s, l1_lambda)?;
                check_len(bias.len(), d_b.len())?;
                update_plain(bias, d_b, m_b, v_b, &s);
            }
            (
                LayerParams::BatchNorm(p),
                LayerGradSlot::BatchNorm { d_gamma, d_beta },
                MomentSlot::Pair { m_a, v_a, m_b, v_b },
            ) => {
                check_len(p.gamma.len(), d_gamma.len())?;
                update_plain(&mut p.gamma, d_gamma, m_a, v_a, &s);
                update_plain(&mut p.beta, d_beta, m_b, v_b, &s);
            }
            (
                LayerParams::Dense(d),
                LayerGradSlot::Dense { d_w, d_b },
                MomentSlot::Pair { m_a, v_a, m_b, v_b },
            ) => {
                check_len(d.w().len(), d_w.len())?;
                let w_len = d.w().len();
                update_plain(&mut d.w_mut()[..w_len], d_w, m_a, v_a, &s);
                let b_len = d.b().len();
                update_plain(&mut d.b_mut()[..b_len], d_b, m_b, v_b, &s);
            }
            (LayerParams::Stateless, LayerGradSlot::Stateless, MomentSlot::None) => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    context: "adam: layer kinds do not line up".into(),
                })
            }
        }
    }
    Ok(())
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            context: format!("adam: tensor length {a} vs gradient length {b}"),
        });
    }
    Ok(())
}

fn update_kernel(
    k: &mut crate::layers::StructuralKernel,
    d_w: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    s: &StepScale,
    l1_lambda: f64,
) -> Result<()> {
    check_len(k.weights().len(), d_w.len())?;
    let (t, f, n_in, m_out) = (k.t(), k.f(), k.n_in(), k.m_out());
    let neighbors: Vec<Vec<usize>> = (0..f).map(|i| k.neighbors(i).to_vec()).collect();
    let w = k.weights_mut();
    for (i, ns) in neighbors.iter().enumerate() {
        for st in 0..t {
            for &j in ns {
                for c in 0..n_in {
                    let base = (((i * t + st) * f + j) * n_in + c) * m_out;
                    for mm in 0..m_out {
                        let idx = base + mm;
                        let g = d_w[idx] + l1_lambda * sign(w[idx]);
                        update_one(&mut w[idx], g, &mut m[idx], &mut v[idx], s);
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Plain,
    L1,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Plain => "plain",
            Stage::L1 => "l1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub train_loss: f64,
    pub val_loss: f64,
    pub l1_lambda: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Index of the first L1-stage epoch for two-stage runs.
    pub stage_boundary: Option<usize>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("epoch,stage,train_loss,val_loss,l1_lambda,wall_seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                r.epoch,
                r.stage.as_str(),
                r.train_loss,
                r.val_loss,
                r.l1_lambda,
                r.wall_seconds
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Paired inputs/targets for training and validation. For reconstruction
/// tasks the target slices alias the inputs.
pub struct TrainData<'a> {
    pub train_inputs: &'a [SeriesTensor],
    pub train_targets: &'a [SeriesTensor],
    pub val_inputs: &'a [SeriesTensor],
    pub val_targets: &'a [SeriesTensor],
}

/// Batch ranges over the shuffled index array: `batch_count` near-equal
/// parts, or fixed-size chunks when `batch_size` is set.
pub(crate) fn split_batches(n: usize, cfg: &TrainConfig) -> Vec<(usize, usize)> {
    if let Some(bs) = cfg.batch_size {
        let bs = bs.max(1);
        return (0..n.div_ceil(bs))
            .map(|b| (b * bs, bs.min(n - b * bs)))
            .collect();
    }
    let k = cfg.batch_count.clamp(1, n.max(1));
    let base = n / k;
    let rem = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let len = base + usize::from(b < rem);
        if len > 0 {
            out.push((start, len));
        }
        start += len;
    }
    out
}

/// Mean per-item MSE on a dataset under inference-mode forward passes.
pub fn evaluate_mse(
    params: &ModelParams,
    spec: &ModelSpec,
    inputs: &[SeriesTensor],
    targets: &[SeriesTensor],
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (chunk_x, chunk_t) in inputs.chunks(32).zip(targets.chunks(32)) {
        let (outs, _) = forward(params, spec, chunk_x, Mode::Infer)?;
        for (o, t) in outs.iter().zip(chunk_t) {
            total += mse_loss(o, t)?.0;
        }
    }
    Ok(total / inputs.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    params: &mut ModelParams,
    spec: &ModelSpec,
    data: &TrainData,
    cfg: &TrainConfig,
    state: &mut AdamState,
    rng: &mut Rng,
    stage: Stage,
    lambda: f64,
    max_epochs: usize,
    stop_on_plateau: bool,
    epoch_offset: usize,
    records: &mut Vec<EpochRecord>,
) -> Result<()> {
    let n = data.train_inputs.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.train_targets.len() != n || data.val_inputs.len() != data.val_targets.len() {
        return Err(Error::ShapeMismatch {
            context: "training data: inputs and targets differ in count".into(),
        });
    }
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;

    for e in 0..max_epochs {
        let t0 = Instant::now();
        // A fresh identity permutation per epoch, so a schedule split across
        // stages shuffles exactly like a single run.
        let mut indices: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut indices);
        let mut loss_sum = 0.0;
        for (start, len) in split_batches(n, cfg) {
            let batch = &indices[start..start + len];
            let xs: Vec<SeriesTensor> =
                batch.iter().map(|&i| data.train_inputs[i].clone()).collect();
            let (outs, cache) = forward(params, spec, &xs, Mode::Train)?;
            let inv_b = 1.0 / len as f64;
            let mut ups = Vec::with_capacity(len);
            for (o, &i) in outs.iter().zip(batch) {
                let (loss, grad) = mse_loss(o, &data.train_targets[i])?;
                loss_sum += loss;
                ups.push(grad.scale(inv_b));
            }
            let grads = backward(params, spec, &cache, &ups)?;
            adam_step(params, &grads, state, lambda)?;
            apply_bn_updates(params, &cache);
        }
        let train_loss = loss_sum / n as f64;
        let val_loss = evaluate_mse(params, spec, data.val_inputs, data.val_targets)?;
        records.push(EpochRecord {
            epoch: epoch_offset + e,
            stage,
            train_loss,
            val_loss,
            l1_lambda: lambda,
            wall_seconds: t0.elapsed().as_secs_f64(),
        });
        if stop_on_plateau {
            if best_val - val_loss >= cfg.min_delta {
                best_val = val_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok(())
}

/// Train for `cfg.epochs` epochs. Each epoch shuffles the window indices
/// with the seeded stream, splits them into batches, accumulates batch-mean
/// gradients and steps ADAM once per batch. The plain stage forces the L1
/// weight to zero.
pub fn train_epochs(
    params: &mut ModelParams,
    spec: &ModelSpec,
    data: &TrainData,
    cfg: &TrainConfig,
    stage: Stage,
    state: &mut AdamState,
    rng: &mut Rng,
) -> Result<TrainLog> {
    let lambda = match stage {
        Stage::Plain => 0.0,
        Stage::L1 => cfg.l1_lambda,
    };
    let mut records = Vec::new();
    run_stage(
        params, spec, data, cfg, state, rng, stage, lambda, cfg.epochs, false, 0, &mut records,
    )?;
    Ok(TrainLog {
        records,
        stage_boundary: None,
    })
}

/// The first stage of the autoencoder schedule: train with the L1 weight
/// forced to zero until the validation loss fails to improve by `min_delta`
/// for `patience` consecutive epochs, capped at `cfg.epochs`.
pub fn train_plain_until_plateau(
    params: &mut ModelParams,
    spec: &ModelSpec,
    data: &TrainData,
    cfg: &TrainConfig,
    state: &mut AdamState,
    rng: &mut Rng,
) -> Result<TrainLog> {
    let mut records = Vec::new();
    run_stage(
        params, spec, data, cfg, state, rng, Stage::Plain, 0.0, cfg.epochs, true, 0, &mut records,
    )?;
    Ok(TrainLog {
        records,
        stage_boundary: None,
    })
}

/// Two-stage autoencoder schedule: train without regularization until the
/// validation loss plateaus (see [`train_plain_until_plateau`]), then
/// continue from those weights with the L1 penalty active for another
/// `cfg.epochs` epochs.
pub fn train_scae_two_stage(
    params: &mut ModelParams,
    spec: &ModelSpec,
    data: &TrainData,
    cfg: &TrainConfig,
    state: &mut AdamState,
    rng: &mut Rng,
) -> Result<TrainLog> {
    if cfg.l1_lambda <= 0.0 {
        return Err(Error::ConfigError {
            key: "l1_lambda".into(),
            message: "two-stage training needs a positive L1 weight".into(),
        });
    }
    let mut log = train_plain_until_plateau(params, spec, data, cfg, state, rng)?;
    let boundary = log.records.len();
    run_stage(
        params,
        spec,
        data,
        cfg,
        state,
        rng,
        Stage::L1,
        cfg.l1_lambda,
        cfg.epochs,
        false,
        boundary,
        &mut log.records,
    )?;
    log.stage_boundary = Some(boundary);
    Ok(log)
}
