//! Structural convolution: a temporal convolution whose per-node kernels sum
//! only over graph-neighboring nodes.
//!
//! The kernel holds one sub-kernel bank per output node. For output node `i`,
//! output channel `m` and output step `tau`:
//!
//! ```text
//! out[tau][i][m] = g( sum_{j in nbr(i)} sum_{s < t} sum_{c < N}
//!                        w[i][s][j][c][m] * x[tau+s][j][c]  +  bias[i][m] )
//! ```
//!
//! Temporal sliding is cross-correlation with valid padding, so an input of
//! `T` steps yields `T - (t - 1)` output steps. Sub-kernel entries toward
//! masked-out nodes are frozen at exactly zero through initialization,
//! training and serialization (mask closure); the compute loops never touch
//! them.

use crate::error::{Error, Result};
use crate::graph::HopMask;
use crate::rng::Rng;
use crate::tensor::SeriesTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// Per-node sub-kernel weight bank of shape `F x t x F x N x M` with a frozen
/// zero-mask, plus a bias of shape `F x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralKernel {
    t: usize,
    f: usize,
    n_in: usize,
    m_out: usize,
    weights: Vec<f64>, // [i][s][j][c][m]
    bias: Vec<f64>,    // [i][m]
    mask: Vec<bool>,   // f x f
    neighbors: Vec<Vec<usize>>, // unmasked j per i, ascending
}

impl StructuralKernel {
    /// Zero-weight kernel with the given mask bits (row-major `f x f`).
    pub fn zeroed(t: usize, f: usize, n_in: usize, m_out: usize, mask: Vec<bool>) -> Result<StructuralKernel> {
        assert!(t > 0 && f > 0 && n_in > 0 && m_out > 0, "zero dimension");
        if mask.len() != f * f {
            return Err(Error::ShapeMismatch {
                context: format!("mask has {} bits for {f} nodes", mask.len()),
            });
        }
        let neighbors = (0..f)
            .map(|i| (0..f).filter(|&j| mask[i * f + j]).collect())
            .collect();
        Ok(StructuralKernel {
            t,
            f,
            n_in,
            m_out,
            weights: vec![0.0; f * t * f * n_in * m_out],
            bias: vec![0.0; f * m_out],
            mask,
            neighbors,
        })
    }

    pub fn from_hop_mask(t: usize, n_in: usize, m_out: usize, mask: &HopMask) -> StructuralKernel {
        Self::zeroed(t, mask.f(), n_in, m_out, mask.bits().to_vec()).expect("hop mask is square")
    }

    /// Identity-mask kernel: no cross-node mixing (time-only convolution).
    pub fn identity_mask(t: usize, f: usize, n_in: usize, m_out: usize) -> StructuralKernel {
        let mask = (0..f * f).map(|x| x / f == x % f).collect();
        Self::zeroed(t, f, n_in, m_out, mask).expect("identity mask is square")
    }

    /// Complete-mask kernel: every node pair interacts (dense convolution).
    pub fn complete_mask(t: usize, f: usize, n_in: usize, m_out: usize) -> StructuralKernel {
        Self::zeroed(t, f, n_in, m_out, vec![true; f * f]).expect("complete mask is square")
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn m_out(&self) -> usize {
        self.m_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn masked(&self, i: usize, j: usize) -> bool {
        !self.mask[i * self.f + j]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_identity_mask(&self) -> bool {
        self.neighbors.iter().enumerate().all(|(i, ns)| ns == &[i])
    }

    /// Flat index of `weights[i][s][j][c][m]`.
    #[inline]
    pub fn w_idx(&self, i: usize, s: usize, j: usize, c: usize, m: usize) -> usize {
        (((i * self.t + s) * self.f + j) * self.n_in + c) * self.m_out + m
    }

    pub fn weight_len(&self) -> usize {
        self.weights.len()
    }

    /// Number of weight positions not frozen by the mask.
    pub fn unmasked_weight_count(&self) -> usize {
        let per_pair = self.t * self.n_in * self.m_out;
        self.neighbors.iter().map(|ns| ns.len() * per_pair).sum()
    }

    /// Xavier-uniform init over the unmasked positions of each node's
    /// sub-kernel bank; fans count unmasked positions only, so the limit for
    /// node `i` is `sqrt(6 / (deg(i) * t * (N + M)))`. All biases start
    /// at 0.5.
    pub fn init_xavier(&mut self, rng: &mut Rng) {
        for i in 0..self.f {
            let deg = self.neighbors[i].len().max(1);
            let limit = (6.0 / ((self.n_in + self.m_out) * deg * self.t) as f64).sqrt();
            for s in 0..self.t {
                for &j in &self.neighbors[i] {
                    for c in 0..self.n_in {
                        let base = self.w_idx(i, s, j, c, 0);
                        for m in 0..self.m_out {
                            self.weights[base + m] = rng.uniform_in(-limit, limit);
                        }
                    }
                }
            }
        }
        for b in self.bias.iter_mut() {
            *b = 0.5;
        }
    }

    /// Verify that every masked weight position is bit-exact zero.
    pub fn check_mask_closure(&self) -> Result<()> {
        for i in 0..self.f {
            for j in 0..self.f {
                if !self.mask[i * self.f + j] {
                    for s in 0..self.t {
                        for c in 0..self.n_in {
                            let base = self.w_idx(i, s, j, c, 0);
                            for m in 0..self.m_out {
                                if self.weights[base + m] != 0.0 {
                                    return Err(Error::MaskViolation {
                                        context: format!("weights[{i}][{s}][{j}][{c}][{m}]"),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &SeriesTensor) -> Result<usize> {
        let (t_len, f, n) = x.shape();
        if f != self.f || n != self.n_in {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "input {t_len}x{f}x{n} vs kernel f={} n_in={}",
                    self.f, self.n_in
                ),
            });
        }
        if t_len < self.t {
            return Err(Error::TemporalTooShort {
                t_len,
                needed: self.t,
            });
        }
        Ok(t_len - (self.t - 1))
    }
}

/// Gradients of one convolution layer: same shapes as the parameters they
/// mirror, plus the gradient with respect to the layer input. `d_weights`
/// respects the same zero-mask as the weights.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
    pub d_input: SeriesTensor,
}

/// Pre-activation correlation; shared by the forward pass and the transpose
/// layer's input gradient (which is a plain convolution of the upstream).
fn correlate(x: &SeriesTensor, k: &StructuralKernel, with_bias: bool) -> SeriesTensor {
    let out_t = x.t_len() - (k.t - 1);
    let mut out = SeriesTensor::zeros(out_t, k.f, k.m_out);
    let (f, n_in, m_out) = (k.f, k.n_in, k.m_out);
    let w = &k.weights;
    let xd = x.data();
    let od = out.data_mut();
    for tau in 0..out_t {
        for i in 0..f {
            let orow = &mut od[(tau * f + i) * m_out..(tau * f + i + 1) * m_out];
            if with_bias {
                orow.copy_from_slice(&k.bias[i * m_out..(i + 1) * m_out]);
            }
            for s in 0..k.t {
                let xrow = &xd[(tau + s) * f * n_in..(tau + s + 1) * f * n_in];
                for &j in &k.neighbors[i] {
                    for c in 0..n_in {
                        let xv = xrow[j * n_in + c];
                        let base = k.w_idx(i, s, j, c, 0);
                        let wrow = &w[base..base + m_out];
                        for (o, wv) in orow.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Linear adjoint of the pre-activation correlation: scatter-add each output
/// contribution back through the sub-kernels. Maps `[T', F, M]` to
/// `[T' + (t-1), F, N]`.
fn scatter_adjoint(y: &SeriesTensor, k: &StructuralKernel) -> SeriesTensor {
    let in_t = y.t_len();
    let mut out = SeriesTensor::zeros(in_t + (k.t - 1), k.f, k.n_in);
    let (f, n_in, m_out) = (k.f, k.n_in, k.m_out);
    let w = &k.weights;
    let yd = y.data();
    let od = out.data_mut();
    for tau in 0..in_t {
        for i in 0..f {
            let yrow = &yd[(tau * f + i) * m_out..(tau * f + i + 1) * m_out];
            for s in 0..k.t {
                let obase = (tau + s) * f * n_in;
                for &j in &k.neighbors[i] {
                    for c in 0..n_in {
                        let base = k.w_idx(i, s, j, c, 0);
                        let wrow = &w[base..base + m_out];
                        let mut acc = 0.0;
                        for (yv, wv) in yrow.iter().zip(wrow) {
                            acc += yv * wv;
                        }
                        od[obase + j * n_in + c] += acc;
                    }
                }
            }
        }
    }
    out
}

/// Forward structural convolution with valid padding. The output has
/// `T - (t-1)` time steps, one node per input node, and `M` channels.
pub fn structural_conv_forward(
    x: &SeriesTensor,
    k: &StructuralKernel,
    activation: Activation,
) -> Result<SeriesTensor> {
    k.check_input(x)?;
    let out = correlate(x, k, true);
    Ok(match activation {
        Activation::Identity => out,
        Activation::Relu => out.map(|v| v.max(0.0)),
    })
}

/// Exact adjoint of the pre-activation forward map. Returns gradients for
/// the weights, the bias, and the input; masked positions of `d_weights` are
/// exactly zero. The activation derivative is the caller's responsibility.
pub fn structural_conv_backward(
    x: &SeriesTensor,
    k: &StructuralKernel,
    upstream: &SeriesTensor,
) -> Result<ConvGrads> {
    let out_t = k.check_input(x)?;
    if upstream.shape() != (out_t, k.f, k.m_out) {
        return Err(Error::ShapeMismatch {
            context: format!(
                "upstream {:?} vs expected ({out_t}, {}, {})",
                upstream.shape(),
                k.f,
                k.m_out
            ),
        });
    }
    let (f, n_in, m_out) = (k.f, k.n_in, k.m_out);
    let mut d_weights = vec![0.0; k.weights.len()];
    let mut d_bias = vec![0.0; k.bias.len()];
    let mut d_input = SeriesTensor::zeros(x.t_len(), f, n_in);
    let w = &k.weights;
    let xd = x.data();
    let ud = upstream.data();
    let did = d_input.data_mut();
    for tau in 0..out_t {
        for i in 0..f {
            let urow = &ud[(tau * f + i) * m_out..(tau * f + i + 1) * m_out];
            let brow = &mut d_bias[i * m_out..(i + 1) * m_out];
            for (b, uv) in brow.iter_mut().zip(urow) {
                *b += uv;
            }
            for s in 0..k.t {
                let xbase = (tau + s) * f * n_in;
                for &j in &k.neighbors[i] {
                    for c in 0..n_in {
                        let xv = xd[xbase + j * n_in + c];
                        let base = k.w_idx(i, s, j, c, 0);
                        let wrow = &w[base..base + m_out];
                        let dwrow = &mut d_weights[base..base + m_out];
                        let mut acc = 0.0;
                        for ((dw, uv), wv) in dwrow.iter_mut().zip(urow).zip(wrow) {
                            *dw += xv * uv;
                            acc += uv * wv;
                        }
                        did[xbase + j * n_in + c] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        d_weights,
        d_bias,
        d_input,
    })
}

/// Transposed structural convolution: the linear adjoint of the forward
/// pre-activation map, so `<conv(x), y> == <x, conv_t(y)>` for all `x`, `y`.
/// The kernel bias is not applied.
pub fn structural_conv_transpose_forward(
    y: &SeriesTensor,
    k: &StructuralKernel,
) -> Result<SeriesTensor> {
    let (_, f, m) = y.shape();
    if f != k.f || m != k.m_out {
        return Err(Error::ShapeMismatch {
            context: format!("transpose input {:?} vs kernel f={} m_out={}", y.shape(), k.f, k.m_out),
        });
    }
    Ok(scatter_adjoint(y, k))
}

/// Gradients of the transposed convolution: `d_input` is a plain forward
/// correlation of the upstream (the adjoint of the adjoint), `d_weights`
/// mirrors the weight shape with the mask respected. The unused kernel bias
/// gets a zero gradient.
pub fn structural_conv_transpose_grads(
    y: &SeriesTensor,
    k: &StructuralKernel,
    upstream: &SeriesTensor,
) -> Result<ConvGrads> {
    let (in_t, f, m) = y.shape();
    if f != k.f || m != k.m_out {
        return Err(Error::ShapeMismatch {
            context: format!("transpose input {:?} vs kernel f={} m_out={}", y.shape(), k.f, k.m_out),
        });
    }
    if upstream.shape() != (in_t + (k.t - 1), k.f, k.n_in) {
        return Err(Error::ShapeMismatch {
            context: format!(
                "transpose upstream {:?} vs expected ({}, {}, {})",
                upstream.shape(),
                in_t + (k.t - 1),
                k.f,
                k.n_in
            ),
        });
    }
    let (n_in, m_out) = (k.n_in, k.m_out);
    let mut d_weights = vec![0.0; k.weights.len()];
    let yd = y.data();
    let ud = upstream.data();
    for tau in 0..in_t {
        for i in 0..f {
            let yrow = &yd[(tau * f + i) * m_out..(tau * f + i + 1) * m_out];
            for s in 0..k.t {
                let ubase = (tau + s) * f * n_in;
                for &j in &k.neighbors[i] {
                    for c in 0..n_in {
                        let uv = ud[ubase + j * n_in + c];
                        let base = k.w_idx(i, s, j, c, 0);
                        let dwrow = &mut d_weights[base..base + m_out];
                        for (dw, yv) in dwrow.iter_mut().zip(yrow) {
                            *dw += uv * yv;
                        }
                    }
                }
            }
        }
    }
    let d_input = correlate(upstream, k, false);
    Ok(ConvGrads {
        d_weights,
        d_bias: vec![0.0; k.bias.len()],
        d_input,
    })
}

/// Time-only convolution: a structural convolution with the identity mask.
pub fn time_conv_forward(
    x: &SeriesTensor,
    k: &StructuralKernel,
    activation: Activation,
) -> Result<SeriesTensor> {
    require_identity_mask(k)?;
    structural_conv_forward(x, k, activation)
}

pub fn time_conv_backward(
    x: &SeriesTensor,
    k: &StructuralKernel,
    upstream: &SeriesTensor,
) -> Result<ConvGrads> {
    require_identity_mask(k)?;
    structural_conv_backward(x, k, upstream)
}

fn require_identity_mask(k: &StructuralKernel) -> Result<()> {
    if !k.has_identity_mask() {
        return Err(Error::ShapeMismatch {
            context: "time convolution requires an identity mask".into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{five_node_example, hop_mask};

    fn filled(k: &mut StructuralKernel, v: f64) {
        for i in 0..k.f() {
            for s in 0..k.t() {
                for &j in &k.neighbors[i].clone() {
                    for c in 0..k.n_in() {
                        for m in 0..k.m_out() {
                            let idx = k.w_idx(i, s, j, c, m);
                            k.weights_mut()[idx] = v;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn complete_mask_row_sums() {
        // F=2, t=1, all weights 1, bias 0: each output node sums its row.
        let mut k = StructuralKernel::complete_mask(1, 2, 1, 1);
        filled(&mut k, 1.0);
        let x = SeriesTensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], 2, 1).unwrap();
        let y = structural_conv_forward(&x, &k, Activation::Identity).unwrap();
        assert_eq!(y.data(), &[3.0, 3.0, 7.0, 7.0]);
    }

    #[test]
    fn zero_weights_zero_output() {
        let k = StructuralKernel::from_hop_mask(3, 2, 4, &hop_mask(&five_node_example(), 1));
        let x = SeriesTensor::gaussian(&mut Rng::new(5), 10, 5, 2, 0.0, 1.0);
        let y = structural_conv_forward(&x, &k, Activation::Identity).unwrap();
        assert_eq!(y.shape(), (8, 5, 4));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_node_temporal_window() {
        // F=1, t=2, w=[1,-1] over x=[1,2,4]: two valid positions.
        let mut k = StructuralKernel::complete_mask(2, 1, 1, 1);
        let i0 = k.w_idx(0, 0, 0, 0, 0);
        let i1 = k.w_idx(0, 1, 0, 0, 0);
        k.weights_mut()[i0] = 1.0;
        k.weights_mut()[i1] = -1.0;
        let x = SeriesTensor::from_rows(&[vec![1.0], vec![2.0], vec![4.0]], 1, 1).unwrap();
        let y = structural_conv_forward(&x, &k, Activation::Identity).unwrap();
        assert_eq!(y.shape(), (2, 1, 1));
        assert_eq!(y.data(), &[-1.0, -2.0]);
    }

    #[test]
    fn too_short_input_rejected() {
        let k = StructuralKernel::complete_mask(5, 2, 1, 1);
        let x = SeriesTensor::zeros(4, 2, 1);
        assert!(matches!(
            structural_conv_forward(&x, &k, Activation::Identity),
            Err(Error::TemporalTooShort { t_len: 4, needed: 5 })
        ));
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut rng = Rng::new(1);
        let mut k = StructuralKernel::from_hop_mask(3, 2, 3, &hop_mask(&five_node_example(), 1));
        k.init_xavier(&mut rng);
        let x = SeriesTensor::gaussian(&mut rng, 12, 5, 2, 0.0, 1.0);
        let up = SeriesTensor::zeros(10, 5, 3);
        let g = structural_conv_backward(&x, &k, &up).unwrap();
        assert!(g.d_weights.iter().all(|&v| v == 0.0));
        assert!(g.d_bias.iter().all(|&v| v == 0.0));
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_weight_grads_are_bit_zero() {
        let mut rng = Rng::new(2);
        let mut k = StructuralKernel::from_hop_mask(3, 2, 3, &hop_mask(&five_node_example(), 1));
        k.init_xavier(&mut rng);
        let x = SeriesTensor::gaussian(&mut rng, 12, 5, 2, 0.0, 1.0);
        let up = SeriesTensor::gaussian(&mut rng, 10, 5, 3, 0.0, 1.0);
        let g = structural_conv_backward(&x, &k, &up).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if k.masked(i, j) {
                    for s in 0..3 {
                        for c in 0..2 {
                            for m in 0..3 {
                                assert_eq!(g.d_weights[k.w_idx(i, s, j, c, m)].to_bits(), 0);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn adjoint_identity_over_seeds() {
        let mask = hop_mask(&five_node_example(), 1);
        for seed in 0..10 {
            let mut rng = Rng::new(seed);
            let mut k = StructuralKernel::from_hop_mask(3, 2, 4, &mask);
            k.init_xavier(&mut rng);
            // Bias must not enter the adjoint identity.
            for b in k.bias_mut() {
                *b = 0.0;
            }
            let x = SeriesTensor::gaussian(&mut rng, 11, 5, 2, 0.0, 1.0);
            let y = SeriesTensor::gaussian(&mut rng, 9, 5, 4, 0.0, 1.0);
            let cx = structural_conv_forward(&x, &k, Activation::Identity).unwrap();
            let cty = structural_conv_transpose_forward(&y, &k).unwrap();
            let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(cty.data()).map(|(a, b)| a * b).sum();
            let cx_norm = cx.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            let y_norm = y.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            let rel = (lhs - rhs).abs() / (cx_norm * y_norm);
            assert!(rel <= 1e-9, "seed {seed}: rel {rel}");
        }
    }

    #[test]
    fn transpose_of_zero_is_zero() {
        let mut rng = Rng::new(3);
        let mut k = StructuralKernel::from_hop_mask(4, 1, 2, &hop_mask(&five_node_example(), 1));
        k.init_xavier(&mut rng);
        let y = SeriesTensor::zeros(7, 5, 2);
        let out = structural_conv_transpose_forward(&y, &k).unwrap();
        assert_eq!(out.shape(), (10, 5, 1));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_transpose_is_multiplication() {
        let mut k = StructuralKernel::complete_mask(1, 1, 1, 1);
        let idx = k.w_idx(0, 0, 0, 0, 0);
        k.weights_mut()[idx] = 2.0;
        let y = SeriesTensor::from_rows(&[vec![3.0], vec![-1.0]], 1, 1).unwrap();
        let out = structural_conv_transpose_forward(&y, &k).unwrap();
        assert_eq!(out.data(), &[6.0, -2.0]);
    }

    #[test]
    fn time_conv_matches_identity_masked_structural() {
        let mut rng = Rng::new(7);
        let mut k = StructuralKernel::identity_mask(3, 4, 2, 3);
        k.init_xavier(&mut rng);
        let x = SeriesTensor::gaussian(&mut rng, 9, 4, 2, 0.0, 1.0);
        let a = time_conv_forward(&x, &k, Activation::Relu).unwrap();
        let b = structural_conv_forward(&x, &k, Activation::Relu).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn time_conv_has_no_cross_node_terms() {
        let mut rng = Rng::new(8);
        let mut k = StructuralKernel::identity_mask(2, 2, 1, 2);
        k.init_xavier(&mut rng);
        let base = SeriesTensor::from_rows(&[vec![1.0, 5.0], vec![1.0, -3.0], vec![1.0, 9.0]], 2, 1).unwrap();
        let tweaked = SeriesTensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 4.0], vec![1.0, 2.0]], 2, 1).unwrap();
        let ya = time_conv_forward(&base, &k, Activation::Identity).unwrap();
        let yb = time_conv_forward(&tweaked, &k, Activation::Identity).unwrap();
        for tau in 0..2 {
            for m in 0..2 {
                assert_eq!(ya.get(tau, 0, m), yb.get(tau, 0, m));
            }
        }
    }

    #[test]
    fn time_conv_rejects_structural_mask() {
        let k = StructuralKernel::complete_mask(2, 3, 1, 1);
        let x = SeriesTensor::zeros(5, 3, 1);
        assert!(time_conv_forward(&x, &k, Activation::Identity).is_err());
    }

    #[test]
    fn linearity_of_pre_activation_map() {
        let mut rng = Rng::new(11);
        let mut k = StructuralKernel::from_hop_mask(3, 2, 3, &hop_mask(&five_node_example(), 1));
        k.init_xavier(&mut rng);
        for b in k.bias_mut() {
            *b = 0.0;
        }
        let x1 = SeriesTensor::gaussian(&mut rng, 8, 5, 2, 0.0, 1.0);
        let x2 = SeriesTensor::gaussian(&mut rng, 8, 5, 2, 0.0, 1.0);
        let (a, b) = (0.7, -1.3);
        let lhs = structural_conv_forward(&x1.scale(a).add(&x2.scale(b)).unwrap(), &k, Activation::Identity).unwrap();
        let rhs = structural_conv_forward(&x1, &k, Activation::Identity)
            .unwrap()
            .scale(a)
            .add(&structural_conv_forward(&x2, &k, Activation::Identity).unwrap().scale(b))
            .unwrap();
        let scale = lhs.data().iter().map(|v| v.abs()).fold(1.0, f64::max);
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            assert!((l - r).abs() / scale <= 1e-9);
        }
    }

    #[test]
    fn shape_law_grid() {
        for &t in &[1usize, 2, 5, 9] {
            for &t_len in &[t, t + 1, 50] {
                let k = StructuralKernel::complete_mask(t, 3, 2, 2);
                let x = SeriesTensor::zeros(t_len, 3, 2);
                let y = structural_conv_forward(&x, &k, Activation::Identity).unwrap();
                assert_eq!(y.t_len(), t_len - (t - 1));
            }
        }
    }

    #[test]
    fn mask_closure_detects_violation() {
        let mut k = StructuralKernel::from_hop_mask(2, 1, 1, &hop_mask(&five_node_example(), 1));
        assert!(k.check_mask_closure().is_ok());
        let idx = k.w_idx(0, 0, 2, 0, 0); // node 2 is not a neighbor of node 0
        k.weights_mut()[idx] = 1e-300;
        assert!(k.check_mask_closure().is_err());
    }

    use crate::rng::Rng;
}
