//! Fully connected layer over a flattened `[time][node][channel]` vector.

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    in_dim: usize,
    out_dim: usize,
    w: Vec<f64>, // row-major [out][in]
    b: Vec<f64>,
}

impl DenseParams {
    pub fn zeroed(in_dim: usize, out_dim: usize) -> DenseParams {
        assert!(in_dim > 0 && out_dim > 0, "zero dimension");
        DenseParams {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    /// Xavier-uniform weights, biases 0.5.
    pub fn init_xavier(&mut self, rng: &mut Rng) {
        let limit = (6.0 / (self.in_dim + self.out_dim) as f64).sqrt();
        for w in self.w.iter_mut() {
            *w = rng.uniform_in(-limit, limit);
        }
        for b in self.b.iter_mut() {
            *b = 0.5;
        }
    }
}

pub fn fully_connected_forward(x: &[f64], p: &DenseParams) -> Result<Vec<f64>> {
    if x.len() != p.in_dim {
        return Err(Error::ShapeMismatch {
            context: format!("dense input {} vs in_dim {}", x.len(), p.in_dim),
        });
    }
    let mut out = p.b.clone();
    for (o, wrow) in out.iter_mut().zip(p.w.chunks_exact(p.in_dim)) {
        let mut acc = 0.0;
        for (wv, xv) in wrow.iter().zip(x) {
            acc += wv * xv;
        }
        *o += acc;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub d_w: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d_input: Vec<f64>,
}

/// dW = upstream (x) x, db = upstream, dx = W^T upstream.
pub fn fully_connected_backward(x: &[f64], p: &DenseParams, upstream: &[f64]) -> Result<DenseGrads> {
    if x.len() != p.in_dim || upstream.len() != p.out_dim {
        return Err(Error::ShapeMismatch {
            context: format!(
                "dense backward: x {} upstream {} vs {}x{}",
                x.len(),
                upstream.len(),
                p.out_dim,
                p.in_dim
            ),
        });
    }
    let mut d_w = vec![0.0; p.w.len()];
    let mut d_input = vec![0.0; p.in_dim];
    for o in 0..p.out_dim {
        let uv = upstream[o];
        let wrow = &p.w[o * p.in_dim..(o + 1) * p.in_dim];
        let dwrow = &mut d_w[o * p.in_dim..(o + 1) * p.in_dim];
        for i in 0..p.in_dim {
            dwrow[i] = uv * x[i];
            d_input[i] += uv * wrow[i];
        }
    }
    Ok(DenseGrads {
        d_w,
        d_b: upstream.to_vec(),
        d_input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_through() {
        let mut p = DenseParams::zeroed(3, 3);
        for i in 0..3 {
            p.w_mut()[i * 3 + i] = 1.0;
        }
        let x = [1.0, -2.0, 3.0];
        assert_eq!(fully_connected_forward(&x, &p).unwrap(), x.to_vec());
    }

    #[test]
    fn backward_shapes_and_values() {
        let mut p = DenseParams::zeroed(2, 1);
        p.w_mut().copy_from_slice(&[3.0, 4.0]);
        let g = fully_connected_backward(&[1.0, 2.0], &p, &[2.0]).unwrap();
        assert_eq!(g.d_w, vec![2.0, 4.0]);
        assert_eq!(g.d_b, vec![2.0]);
        assert_eq!(g.d_input, vec![6.0, 8.0]);
    }

    #[test]
    fn input_length_checked() {
        let p = DenseParams::zeroed(2, 1);
        assert!(fully_connected_forward(&[1.0], &p).is_err());
    }
}
