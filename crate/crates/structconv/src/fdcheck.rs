//! Finite-difference gradient audit.
//!
//! Central differences of the forward pass are the independent oracle for
//! every analytic backward pass: the checks here never call the code they
//! verify. Shapes follow the standard audit setup — 12 time steps on the
//! 5-node demo graph with 2 input channels, 3 feature maps and a temporal
//! extent of 3 — plus a composed two-block predictor trained end to end.

use crate::graph::{five_node_example, hop_mask};
use crate::layers::{
    batchnorm_backward, batchnorm_forward, fully_connected_backward, fully_connected_forward,
    relu_backward, relu_forward, structural_conv_backward, structural_conv_forward,
    structural_conv_transpose_forward, structural_conv_transpose_grads, Activation,
    BatchNormParams, DenseParams, Mode, StructuralKernel,
};
use crate::models::{
    backward, build_model, forward, Family, LayerGradSlot, LayerParams, LayerSpec, ModelParams,
    ModelSpec,
};
use crate::optim::mse_loss;
use crate::rng::Rng;
use crate::tensor::SeriesTensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Maximum relative error a passing layer may show.
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= FD_TOLERANCE
    }
}

/// Relative error with a floor that keeps near-zero gradients comparable.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| rel_err(a, b))
        .fold(0.0, f64::max)
}

/// Central differences of `loss` with respect to the slice that `get`
/// exposes inside `target`.
fn fd_on<T>(
    target: &mut T,
    len: usize,
    get: impl Fn(&mut T) -> &mut [f64],
    loss: impl Fn(&T) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for k in 0..len {
        let save = get(target)[k];
        get(target)[k] = save + FD_STEP;
        let plus = loss(target);
        get(target)[k] = save - FD_STEP;
        let minus = loss(target);
        get(target)[k] = save;
        out[k] = (plus - minus) / (2.0 * FD_STEP);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn audit_kernel(mut kernel: StructuralKernel, name: &'static str) -> LayerCheck {
    let mut rng = Rng::new(101);
    kernel.init_xavier(&mut rng);
    let x = SeriesTensor::gaussian(&mut rng, 12, kernel.f(), kernel.n_in(), 0.0, 1.0);
    let probe = SeriesTensor::gaussian(&mut rng, 10, kernel.f(), kernel.m_out(), 0.0, 1.0);

    let grads = structural_conv_backward(&x, &kernel, &probe).expect("shapes agree");
    let loss_of = |k: &StructuralKernel, xs: &SeriesTensor| {
        dot(
            structural_conv_forward(xs, k, Activation::Identity)
                .expect("shapes agree")
                .data(),
            probe.data(),
        )
    };

    let w_len = kernel.weights().len();
    let x_ref = x.clone();
    let fd_w = fd_on(&mut kernel, w_len, |k| k.weights_mut(), |k| loss_of(k, &x_ref));
    let b_len = kernel.bias().len();
    let fd_b = fd_on(&mut kernel, b_len, |k| k.bias_mut(), |k| loss_of(k, &x_ref));
    let mut x_mut = x;
    let x_len = x_mut.data().len();
    let k_ref = kernel.clone();
    let fd_x = fd_on(&mut x_mut, x_len, |t| t.data_mut(), |t| loss_of(&k_ref, t));

    let err = max_rel_err(&grads.d_weights, &fd_w)
        .max(max_rel_err(&grads.d_bias, &fd_b))
        .max(max_rel_err(grads.d_input.data(), &fd_x));
    LayerCheck {
        name,
        max_rel_err: err,
    }
}

pub fn check_structural_conv() -> LayerCheck {
    let mask = hop_mask(&five_node_example(), 1);
    audit_kernel(StructuralKernel::from_hop_mask(3, 2, 3, &mask), "structural_conv")
}

pub fn check_time_conv() -> LayerCheck {
    audit_kernel(StructuralKernel::identity_mask(3, 5, 2, 3), "time_conv")
}

pub fn check_transpose_conv() -> LayerCheck {
    let mask = hop_mask(&five_node_example(), 1);
    let mut kernel = StructuralKernel::from_hop_mask(3, 2, 3, &mask);
    let mut rng = Rng::new(103);
    kernel.init_xavier(&mut rng);
    let y = SeriesTensor::gaussian(&mut rng, 10, 5, 3, 0.0, 1.0);
    let probe = SeriesTensor::gaussian(&mut rng, 12, 5, 2, 0.0, 1.0);

    let grads = structural_conv_transpose_grads(&y, &kernel, &probe).expect("shapes agree");
    let loss_of = |k: &StructuralKernel, ys: &SeriesTensor| {
        dot(
            structural_conv_transpose_forward(ys, k)
                .expect("shapes agree")
                .data(),
            probe.data(),
        )
    };

    let w_len = kernel.weights().len();
    let y_ref = y.clone();
    let fd_w = fd_on(&mut kernel, w_len, |k| k.weights_mut(), |k| loss_of(k, &y_ref));
    let mut y_mut = y;
    let y_len = y_mut.data().len();
    let k_ref = kernel.clone();
    let fd_y = fd_on(&mut y_mut, y_len, |t| t.data_mut(), |t| loss_of(&k_ref, t));

    let err = max_rel_err(&grads.d_weights, &fd_w).max(max_rel_err(grads.d_input.data(), &fd_y));
    LayerCheck {
        name: "transpose_conv",
        max_rel_err: err,
    }
}

pub fn check_batchnorm() -> LayerCheck {
    let mut rng = Rng::new(104);
    let mut p = BatchNormParams::new(5, 3);
    for g in p.gamma.iter_mut() {
        *g = rng.uniform_in(0.5, 1.5);
    }
    for b in p.beta.iter_mut() {
        *b = rng.uniform_in(-0.5, 0.5);
    }
    let batch: Vec<SeriesTensor> = (0..3)
        .map(|_| SeriesTensor::gaussian(&mut rng, 12, 5, 3, 0.3, 1.0))
        .collect();
    let probes: Vec<SeriesTensor> = (0..3)
        .map(|_| SeriesTensor::gaussian(&mut rng, 12, 5, 3, 0.0, 1.0))
        .collect();

    let (_, cache) = batchnorm_forward(&batch, &p, Mode::Train).expect("valid batch");
    let grads = batchnorm_backward(&cache, &p, &probes).expect("train cache");

    struct Env {
        p: BatchNormParams,
        batch: Vec<SeriesTensor>,
    }
    let loss = |e: &Env| {
        let (outs, _) = batchnorm_forward(&e.batch, &e.p, Mode::Train).expect("valid batch");
        outs.iter().zip(&probes).map(|(o, u)| dot(o.data(), u.data())).sum()
    };
    let mut env = Env { p, batch };

    let g_len = env.p.gamma.len();
    let fd_gamma = fd_on(&mut env, g_len, |e| &mut e.p.gamma, loss);
    let fd_beta = fd_on(&mut env, g_len, |e| &mut e.p.beta, loss);
    let mut err = max_rel_err(&grads.d_gamma, &fd_gamma).max(max_rel_err(&grads.d_beta, &fd_beta));
    for item in 0..3 {
        let len = env.batch[item].data().len();
        let fd_x = fd_on(&mut env, len, |e| e.batch[item].data_mut(), loss);
        err = err.max(max_rel_err(grads.d_inputs[item].data(), &fd_x));
    }
    LayerCheck {
        name: "batchnorm",
        max_rel_err: err,
    }
}

pub fn check_fully_connected() -> LayerCheck {
    let mut rng = Rng::new(105);
    let mut p = DenseParams::zeroed(24, 7);
    p.init_xavier(&mut rng);
    let x: Vec<f64> = (0..24).map(|_| rng.normal(0.0, 1.0)).collect();
    let probe: Vec<f64> = (0..7).map(|_| rng.normal(0.0, 1.0)).collect();

    let grads = fully_connected_backward(&x, &p, &probe).expect("shapes agree");
    struct Env {
        p: DenseParams,
        x: Vec<f64>,
    }
    let loss = |e: &Env| dot(&fully_connected_forward(&e.x, &e.p).expect("shapes agree"), &probe);
    let mut env = Env { p, x };

    let w_len = env.p.w().len();
    let fd_w = fd_on(&mut env, w_len, |e| e.p.w_mut(), loss);
    let b_len = env.p.b().len();
    let fd_b = fd_on(&mut env, b_len, |e| e.p.b_mut(), loss);
    let x_len = env.x.len();
    let fd_x = fd_on(&mut env, x_len, |e| &mut e.x, loss);

    let err = max_rel_err(&grads.d_w, &fd_w)
        .max(max_rel_err(&grads.d_b, &fd_b))
        .max(max_rel_err(&grads.d_input, &fd_x));
    LayerCheck {
        name: "fully_connected",
        max_rel_err: err,
    }
}

/// ReLU checked away from its kink: inputs are kept at least 1e-3 from zero
/// so the finite-difference window never crosses it.
pub fn check_relu() -> LayerCheck {
    let mut rng = Rng::new(106);
    let mut x = SeriesTensor::gaussian(&mut rng, 12, 5, 3, 0.0, 1.0);
    for v in x.data_mut().iter_mut() {
        if v.abs() < 1e-3 {
            *v = 1e-3 * if *v < 0.0 { -1.0 } else { 1.0 };
        }
    }
    let probe = SeriesTensor::gaussian(&mut rng, 12, 5, 3, 0.0, 1.0);
    let grads = relu_backward(&x, &probe).expect("shapes agree");
    let len = x.data().len();
    let fd = fd_on(&mut x, len, |t| t.data_mut(), |t| dot(relu_forward(t).data(), probe.data()));
    LayerCheck {
        name: "relu",
        max_rel_err: max_rel_err(grads.data(), &fd),
    }
}

fn two_block_spec() -> ModelSpec {
    ModelSpec {
        family: Family::Scnn,
        f: 5,
        n_channels: 2,
        window: 12,
        horizon: 2,
        encoder: vec![
            LayerSpec::StructuralConv { t: 3, m_out: 3, hop_k: 1 },
            LayerSpec::Relu,
            LayerSpec::BatchNorm,
            LayerSpec::MaxPool { p: 2 },
            LayerSpec::StructuralConv { t: 3, m_out: 3, hop_k: 1 },
            LayerSpec::Relu,
            LayerSpec::BatchNorm,
            LayerSpec::MaxPool { p: 2 },
            LayerSpec::Flatten,
            LayerSpec::FullyConnected { out_dim: 8 },
            LayerSpec::Relu,
            LayerSpec::FullyConnected { out_dim: 10 },
        ],
        decoder: vec![],
    }
}

/// End-to-end audit of a composed two-block predictor: every parameter
/// tensor against finite differences of the batch MSE.
pub fn check_composed_scnn() -> LayerCheck {
    let graph = five_node_example();
    let spec = two_block_spec();
    let mut rng = Rng::new(107);
    let params = build_model(&spec, &graph, &mut rng).expect("spec shape-checks");
    let xs: Vec<SeriesTensor> = (0..2)
        .map(|_| SeriesTensor::gaussian(&mut rng, 12, 5, 2, 0.0, 1.0))
        .collect();
    let targets: Vec<SeriesTensor> = (0..2)
        .map(|_| SeriesTensor::gaussian(&mut rng, 2, 5, 1, 0.0, 1.0))
        .collect();

    let batch_loss = |p: &ModelParams| {
        let (outs, _) = forward(p, &spec, &xs, Mode::Train).expect("forward");
        outs.iter()
            .zip(&targets)
            .map(|(o, t)| mse_loss(o, t).expect("shapes agree").0)
            .sum::<f64>()
            / xs.len() as f64
    };

    let (outs, cache) = forward(&params, &spec, &xs, Mode::Train).expect("forward");
    let inv_b = 1.0 / xs.len() as f64;
    let ups: Vec<SeriesTensor> = outs
        .iter()
        .zip(&targets)
        .map(|(o, t)| mse_loss(o, t).expect("shapes agree").1.scale(inv_b))
        .collect();
    let grads = backward(&params, &spec, &cache, &ups).expect("backward");

    let mut env = params;
    let mut err: f64 = 0.0;
    for idx in 0..env.layers.len() {
        let pairs: Vec<(usize, bool)> = match &env.layers[idx] {
            LayerParams::Conv(k) => vec![(k.weights().len(), true), (k.bias().len(), false)],
            LayerParams::BatchNorm(p) => vec![(p.gamma.len(), true), (p.beta.len(), false)],
            LayerParams::Dense(d) => vec![(d.w().len(), true), (d.b().len(), false)],
            _ => vec![],
        };
        for (len, first) in pairs {
            let fd = fd_on(
                &mut env,
                len,
                |p| match &mut p.layers[idx] {
                    LayerParams::Conv(k) => {
                        if first {
                            k.weights_mut()
                        } else {
                            k.bias_mut()
                        }
                    }
                    LayerParams::BatchNorm(bn) => {
                        if first {
                            &mut bn.gamma
                        } else {
                            &mut bn.beta
                        }
                    }
                    LayerParams::Dense(d) => {
                        if first {
                            d.w_mut()
                        } else {
                            d.b_mut()
                        }
                    }
                    _ => unreachable!("stateless layers have no tensors"),
                },
                batch_loss,
            );
            let analytic: &[f64] = match (&grads.layers[idx], first) {
                (LayerGradSlot::Conv { d_w, .. }, true) => d_w,
                (LayerGradSlot::Conv { d_b, .. }, false) => d_b,
                (LayerGradSlot::BatchNorm { d_gamma, .. }, true) => d_gamma,
                (LayerGradSlot::BatchNorm { d_beta, .. }, false) => d_beta,
                (LayerGradSlot::Dense { d_w, .. }, true) => d_w,
                (LayerGradSlot::Dense { d_b, .. }, false) => d_b,
                _ => unreachable!("grad slot matches layer"),
            };
            err = err.max(max_rel_err(analytic, &fd));
        }
    }
    LayerCheck {
        name: "composed_scnn",
        max_rel_err: err,
    }
}

/// The full audit, one entry per layer kind.
pub fn run_all() -> Vec<LayerCheck> {
    vec![
        check_structural_conv(),
        check_time_conv(),
        check_transpose_conv(),
        check_batchnorm(),
        check_fully_connected(),
        check_relu(),
        check_composed_scnn(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_conv_within_tolerance() {
        let c = check_structural_conv();
        assert!(c.passed(), "{}: {}", c.name, c.max_rel_err);
    }

    #[test]
    fn time_conv_within_tolerance() {
        let c = check_time_conv();
        assert!(c.passed(), "{}: {}", c.name, c.max_rel_err);
    }

    #[test]
    fn transpose_conv_within_tolerance() {
        let c = check_transpose_conv();
        assert!(c.passed(), "{}: {}", c.name, c.max_rel_err);
    }

    #[test]
    fn batchnorm_within_tolerance() {
        let c = check_batchnorm();
        assert!(c.passed(), "{}: {}", c.name, c.max_rel_err);
    }

    #[test]
    fn fully_connected_within_tolerance() {
        let c = check_fully_connected();
        assert!(c.passed(), "{}: {}", c.name, c.max_rel_err);
    }

    #[test]
    fn relu_within_tolerance() {
        let c = check_relu();
        assert!(c.passed(), "{}: {}", c.name, c.max_rel_err);
    }

    #[test]
    fn composed_model_within_tolerance() {
        let c = check_composed_scnn();
        assert!(c.passed(), "{}: {}", c.name, c.max_rel_err);
    }
}
