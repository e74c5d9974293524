//! Model assembly: declarative layer specs compiled against a graph into
//! parameter banks, plus batched forward/backward passes over the composed
//! network.
//!
//! The three families share one plumbing path. Predictors (`scnn`, `tcnn`)
//! map a `[T, F, N]` window to an `H x F` forecast through a flatten and
//! fully connected head; the autoencoder (`scae`) mirrors its encoder with
//! temporal unpooling and transposed convolutions back to `[T, F, N]`. The
//! only difference between the default SCNN and TCNN is the convolution
//! mask.

pub mod checkpoint;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{hop_mask, Graph};
use crate::layers::batchnorm::{self, BatchNormParams, BnCache};
use crate::layers::conv::{Activation, StructuralKernel};
use crate::layers::dense::{self, DenseParams};
use crate::layers::pool::{self, PoolIndices};
use crate::layers::{self};

pub use crate::layers::Mode;
use crate::rng::Rng;
use crate::tensor::SeriesTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Scnn,
    Tcnn,
    Scae,
}

impl Family {
    pub fn is_predictor(&self) -> bool {
        matches!(self, Family::Scnn | Family::Tcnn)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Scnn => "scnn",
            Family::Tcnn => "tcnn",
            Family::Scae => "scae",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Family, String> {
        match s {
            "scnn" => Ok(Family::Scnn),
            "tcnn" => Ok(Family::Tcnn),
            "scae" => Ok(Family::Scae),
            other => Err(format!("unknown family {other:?} (expected scnn|tcnn|scae)")),
        }
    }
}

/// One layer of a declarative model description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    StructuralConv { t: usize, m_out: usize, hop_k: usize },
    TimeConv { t: usize, m_out: usize },
    Relu,
    BatchNorm,
    MaxPool { p: usize },
    Unpool { p: usize },
    TransposeConv { t: usize, m_out: usize, hop_k: usize },
    Flatten,
    FullyConnected { out_dim: usize },
}

/// Ordered layer lists plus the data geometry they are compiled against.
/// `decoder` is empty for predictor families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub f: usize,
    pub n_channels: usize,
    pub window: usize,
    pub horizon: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn all_layers(&self) -> Vec<&LayerSpec> {
        self.encoder.iter().chain(self.decoder.iter()).collect()
    }

    pub fn layer_count(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }
}

/// Default predictor stack:
/// conv(9, 32) -> ReLU -> BN -> MaxPool(2) -> conv(5, 64) -> ReLU -> BN ->
/// MaxPool(2) -> Flatten -> FC(512) -> ReLU -> FC(H*F).
/// The TCNN variant swaps the structural convolutions for time-only ones.
pub fn default_predictor_spec(
    family: Family,
    f: usize,
    n_channels: usize,
    window: usize,
    horizon: usize,
    hop_k: usize,
) -> ModelSpec {
    assert!(family.is_predictor());
    let conv = |t: usize, m_out: usize| -> LayerSpec {
        match family {
            Family::Tcnn => LayerSpec::TimeConv { t, m_out },
            _ => LayerSpec::StructuralConv { t, m_out, hop_k },
        }
    };
    ModelSpec {
        family,
        f,
        n_channels,
        window,
        horizon,
        encoder: vec![
            conv(9, 32),
            LayerSpec::Relu,
            LayerSpec::BatchNorm,
            LayerSpec::MaxPool { p: 2 },
            conv(5, 64),
            LayerSpec::Relu,
            LayerSpec::BatchNorm,
            LayerSpec::MaxPool { p: 2 },
            LayerSpec::Flatten,
            LayerSpec::FullyConnected { out_dim: 512 },
            LayerSpec::Relu,
            LayerSpec::FullyConnected { out_dim: horizon * f },
        ],
        decoder: vec![],
    }
}

/// Default autoencoder: encoder SC(9, 32) -> ReLU -> MaxPool(2) ->
/// SC(5, 16) -> ReLU; decoder mirrors it with transposed convolutions and
/// unpooling, ending with an identity activation.
pub fn default_scae_spec(f: usize, n_channels: usize, window: usize, hop_k: usize) -> ModelSpec {
    ModelSpec {
        family: Family::Scae,
        f,
        n_channels,
        window,
        horizon: 0,
        encoder: vec![
            LayerSpec::StructuralConv { t: 9, m_out: 32, hop_k },
            LayerSpec::Relu,
            LayerSpec::MaxPool { p: 2 },
            LayerSpec::StructuralConv { t: 5, m_out: 16, hop_k },
            LayerSpec::Relu,
        ],
        decoder: vec![
            LayerSpec::TransposeConv { t: 5, m_out: 32, hop_k },
            LayerSpec::Relu,
            LayerSpec::Unpool { p: 2 },
            LayerSpec::TransposeConv { t: 9, m_out: n_channels, hop_k },
        ],
    }
}

/// Shape of the value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageShape {
    Series { t: usize, f: usize, c: usize },
    Flat { len: usize },
}

impl StageShape {
    fn describe(&self) -> String {
        match self {
            StageShape::Series { t, f, c } => format!("[{t}, {f}, {c}]"),
            StageShape::Flat { len } => format!("flat[{len}]"),
        }
    }
}

/// Static compilation result: the input shape of every layer, the final
/// shape, and the encoder pool paired with each decoder unpool.
#[derive(Debug, Clone)]
pub struct Plan {
    pub stage_in: Vec<StageShape>,
    pub out_shape: StageShape,
    pub unpool_pair: Vec<Option<usize>>,
}

fn fail(layer: usize, context: impl Into<String>) -> Error {
    Error::ShapeCheckFailed {
        layer,
        context: context.into(),
    }
}

/// Statically shape-check a spec. Composing the declared layers from
/// `[window, F, N]` must yield `flat[H*F]` for predictors and
/// `[window, F, N]` for the autoencoder; the first inconsistent layer is
/// named in the error.
pub fn plan(spec: &ModelSpec) -> Result<Plan> {
    if spec.f == 0 || spec.n_channels == 0 || spec.window == 0 {
        return Err(fail(0, "window, node count and channel count must be positive"));
    }
    if spec.family.is_predictor() {
        if spec.horizon == 0 {
            return Err(fail(0, "predictor horizon must be positive"));
        }
        if !spec.decoder.is_empty() {
            return Err(fail(spec.encoder.len(), "predictor families take no decoder"));
        }
    } else if spec.decoder.is_empty() {
        return Err(fail(0, "scae requires a decoder"));
    }
    let layers = spec.all_layers();
    if layers.is_empty() {
        return Err(fail(0, "model has no layers"));
    }

    let mut cur = StageShape::Series {
        t: spec.window,
        f: spec.f,
        c: spec.n_channels,
    };
    let mut stage_in = Vec::with_capacity(layers.len());
    let mut unpool_pair = vec![None; layers.len()];
    // (layer index, input length, pool length, channels) of open pools
    let mut pool_stack: Vec<(usize, usize, usize, usize)> = Vec::new();

    for (idx, layer) in layers.iter().enumerate() {
        stage_in.push(cur);
        let series = match cur {
            StageShape::Series { t, f, c } => Some((t, f, c)),
            StageShape::Flat { .. } => None,
        };
        cur = match layer {
            LayerSpec::StructuralConv { t, m_out, .. }
            | LayerSpec::TimeConv { t, m_out }
            | LayerSpec::TransposeConv { t, m_out, .. } => {
                let (t_len, f, _) = series
                    .ok_or_else(|| fail(idx, format!("convolution needs a series input, got {}", cur.describe())))?;
                if *t == 0 || *m_out == 0 {
                    return Err(fail(idx, "convolution hyperparameters must be positive"));
                }
                if spec.family == Family::Tcnn
                    && !matches!(layer, LayerSpec::TimeConv { .. })
                {
                    return Err(fail(idx, "tcnn family forbids structural convolution kinds"));
                }
                if matches!(layer, LayerSpec::TransposeConv { .. }) {
                    if spec.family.is_predictor() {
                        return Err(fail(idx, "transposed convolution is only legal in a decoder"));
                    }
                    StageShape::Series { t: t_len + (t - 1), f, c: *m_out }
                } else {
                    if t_len < *t {
                        return Err(fail(
                            idx,
                            format!("input of {t_len} steps is shorter than kernel extent {t}"),
                        ));
                    }
                    StageShape::Series { t: t_len - (t - 1), f, c: *m_out }
                }
            }
            LayerSpec::Relu => cur,
            LayerSpec::BatchNorm => {
                series.ok_or_else(|| fail(idx, "batchnorm needs a series input"))?;
                cur
            }
            LayerSpec::MaxPool { p } => {
                let (t_len, f, c) = series.ok_or_else(|| fail(idx, "maxpool needs a series input"))?;
                if *p == 0 || t_len / p == 0 {
                    return Err(fail(idx, format!("pool length {p} invalid for {t_len} steps")));
                }
                pool_stack.push((idx, t_len, *p, c));
                StageShape::Series { t: t_len / p, f, c }
            }
            LayerSpec::Unpool { p } => {
                let (t_len, f, c) = series.ok_or_else(|| fail(idx, "unpool needs a series input"))?;
                if idx < spec.encoder.len() {
                    return Err(fail(idx, "unpool is only legal in the decoder"));
                }
                let (pidx, src_len, pp, pc) = pool_stack
                    .pop()
                    .ok_or_else(|| fail(idx, "unpool has no paired maxpool"))?;
                if pidx >= spec.encoder.len() {
                    return Err(fail(idx, "unpool must pair with an encoder maxpool"));
                }
                if pp != *p {
                    return Err(fail(idx, format!("unpool length {p} vs paired pool length {pp}")));
                }
                if t_len != src_len / pp || c != pc {
                    return Err(fail(
                        idx,
                        format!(
                            "unpool input {} does not mirror pool layer {pidx} ({} steps, {pc} channels)",
                            cur.describe(),
                            src_len / pp
                        ),
                    ));
                }
                unpool_pair[idx] = Some(pidx);
                StageShape::Series { t: src_len, f, c }
            }
            LayerSpec::Flatten => {
                let (t_len, f, c) = series.ok_or_else(|| fail(idx, "flatten needs a series input"))?;
                StageShape::Flat { len: t_len * f * c }
            }
            LayerSpec::FullyConnected { out_dim } => {
                if *out_dim == 0 {
                    return Err(fail(idx, "fully connected output dimension must be positive"));
                }
                match cur {
                    StageShape::Flat { .. } => StageShape::Flat { len: *out_dim },
                    StageShape::Series { .. } => {
                        return Err(fail(idx, "fully connected layer needs a flattened input"))
                    }
                }
            }
        };
    }

    let expect = if spec.family.is_predictor() {
        StageShape::Flat { len: spec.horizon * spec.f }
    } else {
        StageShape::Series { t: spec.window, f: spec.f, c: spec.n_channels }
    };
    if cur != expect {
        return Err(fail(
            layers.len() - 1,
            format!("final shape {} but the spec declares {}", cur.describe(), expect.describe()),
        ));
    }
    Ok(Plan {
        stage_in,
        out_shape: cur,
        unpool_pair,
    })
}

/// Per-layer parameter banks. `Stateless` marks layers with nothing to learn.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv(StructuralKernel),
    TransposeConv { kernel: StructuralKernel, bias: Vec<f64> },
    BatchNorm(BatchNormParams),
    Dense(DenseParams),
    Stateless,
}

/// Ordered parameter tensors with their frozen masks and the architecture
/// fingerprint the checkpoint format validates against.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub fingerprint: u64,
}

impl ModelParams {
    /// Convolution kernels (forward and transposed) with their layer index.
    pub fn conv_kernels(&self) -> Vec<(usize, &StructuralKernel)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                LayerParams::Conv(k) => Some((i, k)),
                LayerParams::TransposeConv { kernel, .. } => Some((i, kernel)),
                _ => None,
            })
            .collect()
    }

    pub fn check_mask_closure(&self) -> Result<()> {
        for (_, k) in self.conv_kernels() {
            k.check_mask_closure()?;
        }
        Ok(())
    }
}

/// FNV-1a over the canonical JSON of the spec and adjacency; binds a
/// parameter bank to the architecture and graph it was built for.
pub fn fingerprint(spec: &ModelSpec, graph: &Graph) -> u64 {
    let spec_json = serde_json::to_string(spec).expect("spec serializes");
    let mut h = checkpoint::Fnv1a::new();
    h.update(spec_json.as_bytes());
    h.update(b"\n");
    h.update(&(graph.f() as u64).to_le_bytes());
    for v in graph.adjacency() {
        h.update(&v.to_le_bytes());
    }
    h.finish()
}

/// Build and initialize parameters: Xavier-uniform convolution and FC
/// weights (fans counting only unmasked positions), every bias 0.5,
/// gamma 1 and beta 0, masked positions exactly zero.
pub fn build_model(spec: &ModelSpec, graph: &Graph, rng: &mut Rng) -> Result<ModelParams> {
    assemble(spec, graph, Some(rng))
}

/// Parameter banks with the right shapes and masks but no random init;
/// checkpoint loading fills the values afterwards.
pub(crate) fn scaffold(spec: &ModelSpec, graph: &Graph) -> Result<ModelParams> {
    assemble(spec, graph, None)
}

fn assemble(spec: &ModelSpec, graph: &Graph, mut rng: Option<&mut Rng>) -> Result<ModelParams> {
    if graph.f() != spec.f {
        return Err(fail(0, format!("graph has {} nodes, spec declares {}", graph.f(), spec.f)));
    }
    let plan = plan(spec)?;
    let mut layers = Vec::with_capacity(spec.layer_count());
    for (layer, stage) in spec.all_layers().into_iter().zip(&plan.stage_in) {
        let params = match (layer, stage) {
            (LayerSpec::StructuralConv { t, m_out, hop_k }, StageShape::Series { f, c, .. }) => {
                let mut k = StructuralKernel::from_hop_mask(*t, *c, *m_out, &hop_mask(graph, *hop_k));
                debug_assert_eq!(k.f(), *f);
                if let Some(rng) = rng.as_deref_mut() {
                    k.init_xavier(rng);
                }
                LayerParams::Conv(k)
            }
            (LayerSpec::TimeConv { t, m_out }, StageShape::Series { f, c, .. }) => {
                let mut k = StructuralKernel::identity_mask(*t, *f, *c, *m_out);
                if let Some(rng) = rng.as_deref_mut() {
                    k.init_xavier(rng);
                }
                LayerParams::Conv(k)
            }
            (LayerSpec::TransposeConv { t, m_out, hop_k }, StageShape::Series { f, c, .. }) => {
                // Stored in forward orientation: the transpose of a map with
                // n_in = layer output channels, m_out = layer input channels.
                let mut kernel =
                    StructuralKernel::from_hop_mask(*t, *m_out, *c, &hop_mask(graph, *hop_k));
                let mut bias = vec![0.0; f * m_out];
                if let Some(rng) = rng.as_deref_mut() {
                    kernel.init_xavier(rng);
                    for b in kernel.bias_mut() {
                        *b = 0.0; // unused; the layer owns its output bias
                    }
                    bias.fill(0.5);
                }
                LayerParams::TransposeConv { kernel, bias }
            }
            (LayerSpec::BatchNorm, StageShape::Series { f, c, .. }) => {
                LayerParams::BatchNorm(BatchNormParams::new(*f, *c))
            }
            (LayerSpec::FullyConnected { out_dim }, StageShape::Flat { len }) => {
                let mut d = DenseParams::zeroed(*len, *out_dim);
                if let Some(rng) = rng.as_deref_mut() {
                    d.init_xavier(rng);
                }
                LayerParams::Dense(d)
            }
            _ => LayerParams::Stateless,
        };
        layers.push(params);
    }
    Ok(ModelParams {
        layers,
        fingerprint: fingerprint(spec, graph),
    })
}

/// Everything the backward pass (and activation probes) need from a forward
/// pass: per-layer input batches, pool indices, batchnorm caches, and the
/// raw head outputs before the predictor reshape.
pub struct ForwardCache {
    pub fingerprint: u64,
    pub mode: Mode,
    plan: Plan,
    stage_inputs: Vec<Vec<SeriesTensor>>,
    pool_idx: Vec<Option<Vec<PoolIndices>>>,
    bn: Vec<Option<BnCache>>,
    raw_outputs: Vec<SeriesTensor>,
}

impl ForwardCache {
    /// Output batch of a given layer (post-activation for relu layers).
    pub fn layer_output(&self, layer: usize) -> Option<&[SeriesTensor]> {
        if layer + 1 < self.stage_inputs.len() {
            Some(&self.stage_inputs[layer + 1])
        } else if layer + 1 == self.stage_inputs.len() {
            Some(&self.raw_outputs)
        } else {
            None
        }
    }

    pub fn bn_caches(&self) -> &[Option<BnCache>] {
        &self.bn
    }
}

fn check_input_batch(spec: &ModelSpec, xs: &[SeriesTensor]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let expect = (spec.window, spec.f, spec.n_channels);
    for x in xs {
        if x.shape() != expect {
            return Err(Error::ShapeMismatch {
                context: format!("model input {:?}, spec declares {:?}", x.shape(), expect),
            });
        }
    }
    Ok(())
}

/// Run the network over a batch. Predictor outputs are reshaped to
/// `[H, F, 1]`; autoencoder outputs keep the input shape.
pub fn forward(
    params: &ModelParams,
    spec: &ModelSpec,
    xs: &[SeriesTensor],
    mode: Mode,
) -> Result<(Vec<SeriesTensor>, ForwardCache)> {
    check_input_batch(spec, xs)?;
    let plan = plan(spec)?;
    let layers = spec.all_layers();
    if params.layers.len() != layers.len() {
        return Err(Error::StaleCache {
            context: "parameter bank does not match spec".into(),
        });
    }
    let mut cur: Vec<SeriesTensor> = xs.to_vec();
    let mut stage_inputs = Vec::with_capacity(layers.len());
    let mut pool_idx: Vec<Option<Vec<PoolIndices>>> = vec![None; layers.len()];
    let mut bn: Vec<Option<BnCache>> = (0..layers.len()).map(|_| None).collect();

    for (idx, layer) in layers.iter().enumerate() {
        let next = match (layer, &params.layers[idx]) {
            (LayerSpec::StructuralConv { .. } | LayerSpec::TimeConv { .. }, LayerParams::Conv(k)) => {
                cur.par_iter()
                    .map(|x| layers::conv::structural_conv_forward(x, k, Activation::Identity))
                    .collect::<Result<Vec<_>>>()?
            }
            (LayerSpec::TransposeConv { .. }, LayerParams::TransposeConv { kernel, bias }) => {
                cur.par_iter()
                    .map(|x| {
                        let mut out = layers::conv::structural_conv_transpose_forward(x, kernel)?;
                        let (t_len, f, n) = out.shape();
                        for t in 0..t_len {
                            for j in 0..f {
                                for c in 0..n {
                                    let v = out.get(t, j, c) + bias[j * n + c];
                                    out.set(t, j, c, v);
                                }
                            }
                        }
                        Ok(out)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            (LayerSpec::Relu, _) => cur.iter().map(layers::relu_forward).collect(),
            (LayerSpec::BatchNorm, LayerParams::BatchNorm(p)) => {
                let (outs, cache) = batchnorm::batchnorm_forward(&cur, p, mode)?;
                bn[idx] = Some(cache);
                outs
            }
            (LayerSpec::MaxPool { p }, _) => {
                let results = cur
                    .iter()
                    .map(|x| pool::maxpool_time(x, *p))
                    .collect::<Result<Vec<_>>>()?;
                let (outs, idxs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
                pool_idx[idx] = Some(idxs);
                outs
            }
            (LayerSpec::Unpool { p }, _) => {
                let pidx = plan.unpool_pair[idx].expect("plan pairs unpools");
                let indices = pool_idx[pidx].as_ref().expect("paired pool ran");
                cur.iter()
                    .zip(indices)
                    .map(|(x, ind)| pool::unpool_time(x, ind, *p))
                    .collect::<Result<Vec<_>>>()?
            }
            (LayerSpec::Flatten, _) => cur
                .iter()
                .map(|x| {
                    let (t, f, c) = x.shape();
                    x.reshaped(1, 1, t * f * c)
                })
                .collect::<Result<Vec<_>>>()?,
            (LayerSpec::FullyConnected { .. }, LayerParams::Dense(p)) => cur
                .iter()
                .map(|x| {
                    let out = dense::fully_connected_forward(x.row(0), p)?;
                    SeriesTensor::from_flat(1, 1, out.len(), out)
                })
                .collect::<Result<Vec<_>>>()?,
            _ => {
                return Err(Error::StaleCache {
                    context: format!("layer {idx} parameters do not match its spec"),
                })
            }
        };
        stage_inputs.push(std::mem::replace(&mut cur, next));
    }

    let outputs = if spec.family.is_predictor() {
        cur.iter()
            .map(|o| o.reshaped(spec.horizon, spec.f, 1))
            .collect::<Result<Vec<_>>>()?
    } else {
        cur.clone()
    };
    Ok((
        outputs,
        ForwardCache {
            fingerprint: params.fingerprint,
            mode,
            plan,
            stage_inputs,
            pool_idx,
            bn,
            raw_outputs: cur,
        },
    ))
}

/// Convenience single-item forward.
pub fn forward_one(
    params: &ModelParams,
    spec: &ModelSpec,
    x: &SeriesTensor,
    mode: Mode,
) -> Result<(SeriesTensor, ForwardCache)> {
    let (mut outs, cache) = forward(params, spec, std::slice::from_ref(x), mode)?;
    Ok((outs.pop().expect("one output"), cache))
}

/// Per-layer gradients; shapes mirror [`LayerParams`].
#[derive(Debug, Clone)]
pub enum LayerGradSlot {
    Conv { d_w: Vec<f64>, d_b: Vec<f64> },
    TransposeConv { d_w: Vec<f64>, d_b: Vec<f64> },
    BatchNorm { d_gamma: Vec<f64>, d_beta: Vec<f64> },
    Dense { d_w: Vec<f64>, d_b: Vec<f64> },
    Stateless,
}

#[derive(Debug, Clone)]
pub struct GradSet {
    pub layers: Vec<LayerGradSlot>,
}

impl GradSet {
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for slot in &self.layers {
            let (a, b) = match slot {
                LayerGradSlot::Conv { d_w, d_b }
                | LayerGradSlot::TransposeConv { d_w, d_b }
                | LayerGradSlot::Dense { d_w, d_b } => (d_w, d_b),
                LayerGradSlot::BatchNorm { d_gamma, d_beta } => (d_gamma, d_beta),
                LayerGradSlot::Stateless => continue,
            };
            for v in a.iter().chain(b) {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Reverse-mode composition of the layer backwards. `loss_grads` holds the
/// gradient of the scalar loss with respect to each batch item's output (in
/// the reshaped `[H, F, 1]` form for predictors). Gradients accumulate by
/// summation across the batch; masked kernel positions stay exactly zero.
pub fn backward(
    params: &ModelParams,
    spec: &ModelSpec,
    cache: &ForwardCache,
    loss_grads: &[SeriesTensor],
) -> Result<GradSet> {
    if cache.fingerprint != params.fingerprint {
        return Err(Error::StaleCache {
            context: "cache fingerprint differs from parameters".into(),
        });
    }
    if cache.mode != Mode::Train {
        return Err(Error::StaleCache {
            context: "backward requires a train-mode cache".into(),
        });
    }
    let layers = spec.all_layers();
    if cache.stage_inputs.len() != layers.len() {
        return Err(Error::StaleCache {
            context: "cache does not cover this spec".into(),
        });
    }
    let batch = cache.stage_inputs[0].len();
    if loss_grads.len() != batch {
        return Err(Error::StaleCache {
            context: format!("{} loss grads for a batch of {batch}", loss_grads.len()),
        });
    }

    let mut ups: Vec<SeriesTensor> = if spec.family.is_predictor() {
        loss_grads
            .iter()
            .map(|g| g.reshaped(1, 1, spec.horizon * spec.f))
            .collect::<Result<Vec<_>>>()?
    } else {
        loss_grads.to_vec()
    };
    for (u, o) in ups.iter().zip(&cache.raw_outputs) {
        if u.shape() != o.shape() {
            return Err(Error::ShapeMismatch {
                context: format!("loss grad {:?} vs output {:?}", u.shape(), o.shape()),
            });
        }
    }

    let mut slots: Vec<LayerGradSlot> = (0..layers.len()).map(|_| LayerGradSlot::Stateless).collect();
    for (idx, layer) in layers.iter().enumerate().rev() {
        let inputs = &cache.stage_inputs[idx];
        let (slot, next_ups) = match (layer, &params.layers[idx]) {
            (LayerSpec::StructuralConv { .. } | LayerSpec::TimeConv { .. }, LayerParams::Conv(k)) => {
                let grads = inputs
                    .par_iter()
                    .zip(ups.par_iter())
                    .map(|(x, u)| layers::conv::structural_conv_backward(x, k, u))
                    .collect::<Result<Vec<_>>>()?;
                let mut d_w = vec![0.0; k.weight_len()];
                let mut d_b = vec![0.0; k.bias().len()];
                let mut d_inputs = Vec::with_capacity(batch);
                for g in grads {
                    for (acc, v) in d_w.iter_mut().zip(&g.d_weights) {
                        *acc += v;
                    }
                    for (acc, v) in d_b.iter_mut().zip(&g.d_bias) {
                        *acc += v;
                    }
                    d_inputs.push(g.d_input);
                }
                (LayerGradSlot::Conv { d_w, d_b }, d_inputs)
            }
            (LayerSpec::TransposeConv { .. }, LayerParams::TransposeConv { kernel, bias }) => {
                let grads = inputs
                    .par_iter()
                    .zip(ups.par_iter())
                    .map(|(x, u)| layers::conv::structural_conv_transpose_grads(x, kernel, u))
                    .collect::<Result<Vec<_>>>()?;
                let mut d_w = vec![0.0; kernel.weight_len()];
                let mut d_b = vec![0.0; bias.len()];
                let mut d_inputs = Vec::with_capacity(batch);
                for (g, u) in grads.into_iter().zip(&ups) {
                    for (acc, v) in d_w.iter_mut().zip(&g.d_weights) {
                        *acc += v;
                    }
                    let (t_len, f, n) = u.shape();
                    for t in 0..t_len {
                        for j in 0..f {
                            for c in 0..n {
                                d_b[j * n + c] += u.get(t, j, c);
                            }
                        }
                    }
                    d_inputs.push(g.d_input);
                }
                (LayerGradSlot::TransposeConv { d_w, d_b }, d_inputs)
            }
            (LayerSpec::Relu, _) => {
                let d_inputs = inputs
                    .iter()
                    .zip(&ups)
                    .map(|(x, u)| layers::relu_backward(x, u))
                    .collect::<Result<Vec<_>>>()?;
                (LayerGradSlot::Stateless, d_inputs)
            }
            (LayerSpec::BatchNorm, LayerParams::BatchNorm(p)) => {
                let bn_cache = cache.bn[idx].as_ref().ok_or(Error::StaleCache {
                    context: format!("no batchnorm cache at layer {idx}"),
                })?;
                let g = batchnorm::batchnorm_backward(bn_cache, p, &ups)?;
                (
                    LayerGradSlot::BatchNorm {
                        d_gamma: g.d_gamma,
                        d_beta: g.d_beta,
                    },
                    g.d_inputs,
                )
            }
            (LayerSpec::MaxPool { .. }, _) => {
                let indices = cache.pool_idx[idx].as_ref().ok_or(Error::StaleCache {
                    context: format!("no pool indices at layer {idx}"),
                })?;
                let d_inputs = ups
                    .iter()
                    .zip(indices)
                    .map(|(u, ind)| pool::maxpool_backward(u, ind))
                    .collect::<Result<Vec<_>>>()?;
                (LayerGradSlot::Stateless, d_inputs)
            }
            (LayerSpec::Unpool { .. }, _) => {
                let pidx = cache.plan.unpool_pair[idx].expect("plan pairs unpools");
                let indices = cache.pool_idx[pidx].as_ref().ok_or(Error::StaleCache {
                    context: format!("no pool indices at layer {pidx}"),
                })?;
                let d_inputs = ups
                    .iter()
                    .zip(indices)
                    .map(|(u, ind)| pool::unpool_backward(u, ind))
                    .collect::<Result<Vec<_>>>()?;
                (LayerGradSlot::Stateless, d_inputs)
            }
            (LayerSpec::Flatten, _) => {
                let d_inputs = inputs
                    .iter()
                    .zip(&ups)
                    .map(|(x, u)| {
                        let (t, f, c) = x.shape();
                        u.reshaped(t, f, c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (LayerGradSlot::Stateless, d_inputs)
            }
            (LayerSpec::FullyConnected { .. }, LayerParams::Dense(p)) => {
                let mut d_w = vec![0.0; p.w().len()];
                let mut d_b = vec![0.0; p.b().len()];
                let mut d_inputs = Vec::with_capacity(batch);
                for (x, u) in inputs.iter().zip(&ups) {
                    let g = dense::fully_connected_backward(x.row(0), p, u.row(0))?;
                    for (acc, v) in d_w.iter_mut().zip(&g.d_w) {
                        *acc += v;
                    }
                    for (acc, v) in d_b.iter_mut().zip(&g.d_b) {
                        *acc += v;
                    }
                    d_inputs.push(SeriesTensor::from_flat(1, 1, g.d_input.len(), g.d_input)?);
                }
                (LayerGradSlot::Dense { d_w, d_b }, d_inputs)
            }
            _ => {
                return Err(Error::StaleCache {
                    context: format!("layer {idx} parameters do not match its spec"),
                })
            }
        };
        slots[idx] = slot;
        ups = next_ups;
    }
    Ok(GradSet { layers: slots })
}

/// Commit the batch statistics gathered by a train-mode forward into the
/// running averages of every batchnorm layer. The single training writer
/// calls this once per step.
pub fn apply_bn_updates(params: &mut ModelParams, cache: &ForwardCache) {
    for (layer, bn_cache) in params.layers.iter_mut().zip(cache.bn.iter()) {
        if let (LayerParams::BatchNorm(p), Some(c)) = (layer, bn_cache) {
            batchnorm::update_running(p, c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::five_node_example;

    fn tiny_scnn() -> (ModelSpec, Graph) {
        let g = five_node_example();
        let spec = ModelSpec {
            family: Family::Scnn,
            f: 5,
            n_channels: 1,
            window: 24,
            horizon: 4,
            encoder: vec![
                LayerSpec::StructuralConv { t: 3, m_out: 3, hop_k: 1 },
                LayerSpec::Relu,
                LayerSpec::BatchNorm,
                LayerSpec::MaxPool { p: 2 },
                LayerSpec::StructuralConv { t: 3, m_out: 2, hop_k: 1 },
                LayerSpec::Relu,
                LayerSpec::MaxPool { p: 2 },
                LayerSpec::Flatten,
                LayerSpec::FullyConnected { out_dim: 16 },
                LayerSpec::Relu,
                LayerSpec::FullyConnected { out_dim: 20 },
            ],
            decoder: vec![],
        };
        (spec, g)
    }

    #[test]
    fn default_specs_differ_only_in_conv_kind() {
        let s = default_predictor_spec(Family::Scnn, 5, 1, 100, 20, 1);
        let t = default_predictor_spec(Family::Tcnn, 5, 1, 100, 20, 1);
        assert_eq!(s.encoder.len(), t.encoder.len());
        for (a, b) in s.encoder.iter().zip(&t.encoder) {
            match (a, b) {
                (
                    LayerSpec::StructuralConv { t: t1, m_out: m1, .. },
                    LayerSpec::TimeConv { t: t2, m_out: m2 },
                ) => {
                    assert_eq!(t1, t2);
                    assert_eq!(m1, m2);
                }
                (a, b) => assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn default_scnn_shape_checks_at_paper_scale() {
        let spec = default_predictor_spec(Family::Scnn, 22, 1, 500, 100, 1);
        let p = plan(&spec).unwrap();
        assert_eq!(p.out_shape, StageShape::Flat { len: 100 * 22 });
    }

    #[test]
    fn plan_rejects_structural_conv_in_tcnn() {
        let mut spec = default_predictor_spec(Family::Tcnn, 5, 1, 100, 20, 1);
        spec.encoder[0] = LayerSpec::StructuralConv { t: 9, m_out: 32, hop_k: 1 };
        let err = plan(&spec).unwrap_err();
        assert!(matches!(err, Error::ShapeCheckFailed { layer: 0, .. }));
    }

    #[test]
    fn plan_names_first_bad_layer() {
        let (mut spec, _) = tiny_scnn();
        spec.encoder[4] = LayerSpec::StructuralConv { t: 99, m_out: 2, hop_k: 1 };
        let err = plan(&spec).unwrap_err();
        assert!(matches!(err, Error::ShapeCheckFailed { layer: 4, .. }));
    }

    #[test]
    fn plan_requires_declared_output() {
        let (mut spec, _) = tiny_scnn();
        spec.horizon = 5; // head still emits 20 = 4 * 5 values
        assert!(plan(&spec).is_err());
    }

    #[test]
    fn scae_mirror_restores_shape() {
        let spec = default_scae_spec(5, 1, 100, 1);
        let p = plan(&spec).unwrap();
        assert_eq!(p.out_shape, StageShape::Series { t: 100, f: 5, c: 1 });
        assert_eq!(p.unpool_pair[7], Some(2));
    }

    #[test]
    fn built_biases_are_half() {
        let (spec, g) = tiny_scnn();
        let params = build_model(&spec, &g, &mut Rng::new(1)).unwrap();
        for layer in &params.layers {
            match layer {
                LayerParams::Conv(k) => assert!(k.bias().iter().all(|&b| b == 0.5)),
                LayerParams::Dense(d) => assert!(d.b().iter().all(|&b| b == 0.5)),
                LayerParams::TransposeConv { bias, .. } => {
                    assert!(bias.iter().all(|&b| b == 0.5))
                }
                _ => {}
            }
        }
    }

    #[test]
    fn sub_kernel_zero_pattern_follows_graph() {
        // Node 2's only 1-hop neighbors are itself and node 1.
        let g = five_node_example();
        let spec = ModelSpec {
            family: Family::Scnn,
            f: 5,
            n_channels: 1,
            window: 10,
            horizon: 1,
            encoder: vec![
                LayerSpec::StructuralConv { t: 3, m_out: 1, hop_k: 1 },
                LayerSpec::Flatten,
                LayerSpec::FullyConnected { out_dim: 5 },
            ],
            decoder: vec![],
        };
        let params = build_model(&spec, &g, &mut Rng::new(3)).unwrap();
        let LayerParams::Conv(k) = &params.layers[0] else { panic!() };
        for s in 0..3 {
            for j in 0..5 {
                let v = k.weights()[k.w_idx(2, s, j, 0, 0)];
                if j == 1 || j == 2 {
                    assert_ne!(v, 0.0);
                } else {
                    assert_eq!(v.to_bits(), 0);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let (spec, g) = tiny_scnn();
        let a = build_model(&spec, &g, &mut Rng::new(7)).unwrap();
        let b = build_model(&spec, &g, &mut Rng::new(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_shapes_and_zero_case() {
        let (spec, g) = tiny_scnn();
        let mut params = build_model(&spec, &g, &mut Rng::new(2)).unwrap();
        // Zero every parameter: output must be exactly zero.
        for layer in params.layers.iter_mut() {
            match layer {
                LayerParams::Conv(k) => {
                    k.weights_mut().fill(0.0);
                    k.bias_mut().fill(0.0);
                }
                LayerParams::Dense(d) => {
                    d.w_mut().fill(0.0);
                    d.b_mut().fill(0.0);
                }
                LayerParams::TransposeConv { kernel, bias } => {
                    kernel.weights_mut().fill(0.0);
                    bias.fill(0.0);
                }
                _ => {}
            }
        }
        let x = SeriesTensor::zeros(24, 5, 1);
        let (out, _) = forward_one(&params, &spec, &x, Mode::Infer).unwrap();
        assert_eq!(out.shape(), (4, 5, 1));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scae_output_matches_input_shape() {
        let g = five_node_example();
        let spec = default_scae_spec(5, 1, 60, 1);
        let params = build_model(&spec, &g, &mut Rng::new(4)).unwrap();
        let x = SeriesTensor::gaussian(&mut Rng::new(5), 60, 5, 1, 0.0, 1.0);
        let (out, _) = forward_one(&params, &spec, &x, Mode::Infer).unwrap();
        assert_eq!(out.shape(), x.shape());
    }

    #[test]
    fn zero_loss_grad_gives_zero_grads() {
        let (spec, g) = tiny_scnn();
        let params = build_model(&spec, &g, &mut Rng::new(6)).unwrap();
        let xs: Vec<SeriesTensor> = (0..2)
            .map(|s| SeriesTensor::gaussian(&mut Rng::new(s), 24, 5, 1, 0.0, 1.0))
            .collect();
        let (outs, cache) = forward(&params, &spec, &xs, Mode::Train).unwrap();
        let zeros: Vec<SeriesTensor> = outs.iter().map(|o| o.scale(0.0)).collect();
        let grads = backward(&params, &spec, &cache, &zeros).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn stale_cache_rejected() {
        let (spec, g) = tiny_scnn();
        let params = build_model(&spec, &g, &mut Rng::new(6)).unwrap();
        let other = build_model(&spec, &g, &mut Rng::new(7)).unwrap();
        let x = SeriesTensor::gaussian(&mut Rng::new(1), 24, 5, 1, 0.0, 1.0);
        let (out, cache) = forward(&params, &spec, std::slice::from_ref(&x), Mode::Train).unwrap();
        let mut tampered = other;
        tampered.fingerprint ^= 1;
        let err = backward(&tampered, &spec, &cache, &out).unwrap_err();
        assert!(matches!(err, Error::StaleCache { .. }));
    }
}
