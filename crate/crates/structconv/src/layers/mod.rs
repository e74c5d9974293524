//! Differentiable layers: structural convolution and its transpose, time-only
//! convolution, ReLU, batch normalization, temporal max-pool/unpool, and the
//! fully connected layer. Each has a forward pass and an exact backward pass.
//!
//! Forward and backward are pure functions of `(input, params)`; parameters
//! are never mutated during evaluation, so batch items can be processed
//! concurrently.

pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod pool;

pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormParams, BnCache, Mode};
pub use conv::{
    structural_conv_backward, structural_conv_forward, structural_conv_transpose_forward,
    structural_conv_transpose_grads, time_conv_backward, time_conv_forward, Activation, ConvGrads,
    StructuralKernel,
};
pub use dense::{fully_connected_backward, fully_connected_forward, DenseGrads, DenseParams};
pub use pool::{maxpool_backward, maxpool_time, unpool_backward, unpool_time, PoolIndices};

use crate::error::{Error, Result};
use crate::tensor::SeriesTensor;

/// Elementwise max(0, x).
pub fn relu_forward(x: &SeriesTensor) -> SeriesTensor {
    x.map(|v| v.max(0.0))
}

/// Pass upstream where the forward input was strictly positive; the
/// derivative at exactly 0 is 0.
pub fn relu_backward(input: &SeriesTensor, upstream: &SeriesTensor) -> Result<SeriesTensor> {
    if input.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            context: format!("relu: {:?} vs {:?}", input.shape(), upstream.shape()),
        });
    }
    let mut out = upstream.clone();
    for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *o = 0.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps() {
        let x = SeriesTensor::from_rows(&[vec![-1.0], vec![0.0], vec![2.0]], 1, 1).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_backward_routes() {
        let x = SeriesTensor::from_rows(&[vec![-1.0], vec![0.0], vec![2.0]], 1, 1).unwrap();
        let up = SeriesTensor::from_rows(&[vec![5.0], vec![5.0], vec![5.0]], 1, 1).unwrap();
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 0.0, 5.0]);
    }
}
