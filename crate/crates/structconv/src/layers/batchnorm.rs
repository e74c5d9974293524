//! Batch normalization over the batch and time axes, with per-(node, channel)
//! learned scale and shift.
//!
//! Train mode normalizes with the current batch's statistics and exposes them
//! for a running-average update; infer mode normalizes with the running
//! statistics. The running update is applied by the training step through
//! [`update_running`], never inside the forward pass itself.

use crate::error::{Error, Result};
use crate::tensor::SeriesTensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    f: usize,
    c: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormParams {
    /// Fresh parameters: gamma 1, beta 0, running mean 0, running var 1.
    pub fn new(f: usize, c: usize) -> BatchNormParams {
        let len = f * c;
        BatchNormParams {
            f,
            c,
            gamma: vec![1.0; len],
            beta: vec![0.0; len],
            running_mean: vec![0.0; len],
            running_var: vec![1.0; len],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn feature_len(&self) -> usize {
        self.f * self.c
    }
}

/// Train-mode cache needed by the backward pass and the running update.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mode: Mode,
    pub x_hat: Vec<SeriesTensor>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub count: usize, // batch * time elements per feature
}

fn check_batch(batch: &[SeriesTensor], p: &BatchNormParams) -> Result<(usize, usize)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let shape = batch[0].shape();
    for x in batch {
        if x.shape() != shape {
            return Err(Error::ShapeMismatch {
                context: format!("batchnorm batch mixes {:?} and {:?}", shape, x.shape()),
            });
        }
    }
    let (t_len, f, c) = shape;
    if f != p.f || c != p.c {
        return Err(Error::ShapeMismatch {
            context: format!("batchnorm input {:?} vs params {}x{}", shape, p.f, p.c),
        });
    }
    Ok((t_len, batch.len()))
}

pub fn batchnorm_forward(
    batch: &[SeriesTensor],
    p: &BatchNormParams,
    mode: Mode,
) -> Result<(Vec<SeriesTensor>, BnCache)> {
    let (t_len, b) = check_batch(batch, p)?;
    let feat = p.feature_len();
    let count = b * t_len;

    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; feat];
            for x in batch {
                for t in 0..t_len {
                    for (m, v) in mean.iter_mut().zip(x.row(t)) {
                        *m += v;
                    }
                }
            }
            for m in mean.iter_mut() {
                *m /= count as f64;
            }
            let mut var = vec![0.0; feat];
            for x in batch {
                for t in 0..t_len {
                    for (k, v) in x.row(t).iter().enumerate() {
                        let d = v - mean[k];
                        var[k] += d * d;
                    }
                }
            }
            for v in var.iter_mut() {
                *v /= count as f64;
            }
            (mean, var)
        }
        Mode::Infer => (p.running_mean.clone(), p.running_var.clone()),
    };

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + p.epsilon).sqrt()).collect();
    let mut x_hat = Vec::with_capacity(b);
    let mut outs = Vec::with_capacity(b);
    for x in batch {
        let mut xh = x.clone();
        let mut out = x.clone();
        for t in 0..t_len {
            for k in 0..feat {
                let idx = t * feat + k;
                let h = (x.data()[idx] - mean[k]) * inv_std[k];
                xh.data_mut()[idx] = h;
                out.data_mut()[idx] = p.gamma[k] * h + p.beta[k];
            }
        }
        x_hat.push(xh);
        outs.push(out);
    }
    Ok((
        outs,
        BnCache {
            mode,
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            count,
        },
    ))
}

pub struct BnGrads {
    pub d_gamma: Vec<f64>,
    pub d_beta: Vec<f64>,
    pub d_inputs: Vec<SeriesTensor>,
}

/// Backward through train-mode normalization (batch statistics are part of
/// the differentiated graph).
pub fn batchnorm_backward(
    cache: &BnCache,
    p: &BatchNormParams,
    upstream: &[SeriesTensor],
) -> Result<BnGrads> {
    if cache.mode != Mode::Train {
        return Err(Error::StaleCache {
            context: "batchnorm backward requires a train-mode cache".into(),
        });
    }
    if upstream.len() != cache.x_hat.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "batchnorm upstream batch {} vs cached {}",
                upstream.len(),
                cache.x_hat.len()
            ),
        });
    }
    let feat = p.feature_len();
    let t_len = cache.x_hat[0].t_len();
    let n = cache.count as f64;

    let mut d_gamma = vec![0.0; feat];
    let mut d_beta = vec![0.0; feat];
    for (du, xh) in upstream.iter().zip(&cache.x_hat) {
        if du.shape() != xh.shape() {
            return Err(Error::ShapeMismatch {
                context: format!("batchnorm upstream {:?} vs {:?}", du.shape(), xh.shape()),
            });
        }
        for t in 0..t_len {
            for k in 0..feat {
                let idx = t * feat + k;
                d_beta[k] += du.data()[idx];
                d_gamma[k] += du.data()[idx] * xh.data()[idx];
            }
        }
    }

    // dx = gamma * inv_std * (du - mean(du) - x_hat * mean(du * x_hat))
    let mut d_inputs = Vec::with_capacity(upstream.len());
    for (du, xh) in upstream.iter().zip(&cache.x_hat) {
        let mut dx = du.clone();
        for t in 0..t_len {
            for k in 0..feat {
                let idx = t * feat + k;
                let centered =
                    du.data()[idx] - d_beta[k] / n - xh.data()[idx] * d_gamma[k] / n;
                dx.data_mut()[idx] = p.gamma[k] * cache.inv_std[k] * centered;
            }
        }
        d_inputs.push(dx);
    }
    Ok(BnGrads {
        d_gamma,
        d_beta,
        d_inputs,
    })
}

/// Commit batch statistics into the running averages:
/// `running = momentum * running + (1 - momentum) * batch`.
pub fn update_running(p: &mut BatchNormParams, cache: &BnCache) {
    for k in 0..p.feature_len() {
        p.running_mean[k] = p.momentum * p.running_mean[k] + (1.0 - p.momentum) * cache.batch_mean[k];
        p.running_var[k] = p.momentum * p.running_var[k] + (1.0 - p.momentum) * cache.batch_var[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn train_mode_normalizes() {
        // Spread data so eps/var stays below the 1e-6 variance tolerance.
        let mut rng = Rng::new(1);
        let batch: Vec<SeriesTensor> = (0..3)
            .map(|_| SeriesTensor::gaussian(&mut rng, 20, 2, 2, 5.0, 30.0))
            .collect();
        let p = BatchNormParams::new(2, 2);
        let (outs, _) = batchnorm_forward(&batch, &p, Mode::Train).unwrap();
        let feat = 4;
        let n = (3 * 20) as f64;
        for k in 0..feat {
            let mut mean = 0.0;
            for o in &outs {
                for t in 0..20 {
                    mean += o.data()[t * feat + k];
                }
            }
            mean /= n;
            let mut var = 0.0;
            for o in &outs {
                for t in 0..20 {
                    let d = o.data()[t * feat + k] - mean;
                    var += d * d;
                }
            }
            var /= n;
            assert!(mean.abs() <= 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-6, "var {var}");
        }
    }

    #[test]
    fn beta_shifts_output_mean() {
        let mut rng = Rng::new(2);
        let batch = vec![SeriesTensor::gaussian(&mut rng, 50, 1, 1, 0.0, 10.0)];
        let mut p = BatchNormParams::new(1, 1);
        p.beta[0] = 5.0;
        let (outs, _) = batchnorm_forward(&batch, &p, Mode::Train).unwrap();
        let mean = outs[0].data().iter().sum::<f64>() / 50.0;
        assert!((mean - 5.0).abs() <= 1e-9);
    }

    #[test]
    fn empty_batch_rejected() {
        let p = BatchNormParams::new(1, 1);
        assert!(matches!(
            batchnorm_forward(&[], &p, Mode::Train),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn infer_mode_uses_running_stats() {
        let mut p = BatchNormParams::new(1, 1);
        p.running_mean[0] = 2.0;
        p.running_var[0] = 4.0;
        let x = SeriesTensor::from_rows(&[vec![4.0]], 1, 1).unwrap();
        let (outs, _) = batchnorm_forward(&[x], &p, Mode::Infer).unwrap();
        let expect = (4.0 - 2.0) / (4.0 + BN_EPSILON).sqrt();
        assert!((outs[0].data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn running_update_blends() {
        let mut rng = Rng::new(3);
        let batch = vec![SeriesTensor::gaussian(&mut rng, 30, 1, 1, 1.0, 2.0)];
        let mut p = BatchNormParams::new(1, 1);
        let (_, cache) = batchnorm_forward(&batch, &p, Mode::Train).unwrap();
        update_running(&mut p, &cache);
        let expect = 0.9 * 0.0 + (1.0 - 0.9) * cache.batch_mean[0];
        assert_eq!(p.running_mean[0], expect);
    }
}
