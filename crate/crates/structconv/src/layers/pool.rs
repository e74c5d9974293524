//! Temporal max pooling and its unpooling inverse.
//!
//! Pooling uses non-overlapping windows (stride equals the pool length) and
//! drops a trailing remainder shorter than one window. Unpooling scatters
//! each value back to the argmax offset recorded by the paired pool and
//! zero-fills everywhere else, so `pool(unpool(y)) == y` whenever `y` holds
//! the (nonnegative) outputs of the paired pool.

use crate::error::{Error, Result};
use crate::tensor::SeriesTensor;

/// Argmax time-offset per (output step, node, channel), plus enough shape
/// information to reverse the pool exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    pub p: usize,
    pub src_len: usize,
    pub out_t: usize,
    pub f: usize,
    pub n: usize,
    offsets: Vec<u32>, // in [0, p)
}

impl PoolIndices {
    #[inline]
    pub fn offset(&self, w: usize, i: usize, c: usize) -> usize {
        self.offsets[(w * self.f + i) * self.n + c] as usize
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }
}

/// Max over non-overlapping windows of `p` time steps. Ties break toward the
/// earliest offset.
pub fn maxpool_time(x: &SeriesTensor, p: usize) -> Result<(SeriesTensor, PoolIndices)> {
    let (t_len, f, n) = x.shape();
    if p == 0 || t_len / p == 0 {
        return Err(Error::BadPoolLength { p, t_len });
    }
    let out_t = t_len / p;
    let mut out = SeriesTensor::zeros(out_t, f, n);
    let mut offsets = vec![0u32; out_t * f * n];
    for w in 0..out_t {
        for i in 0..f {
            for c in 0..n {
                let mut best = x.get(w * p, i, c);
                let mut best_off = 0u32;
                for off in 1..p {
                    let v = x.get(w * p + off, i, c);
                    if v > best {
                        best = v;
                        best_off = off as u32;
                    }
                }
                out.set(w, i, c, best);
                offsets[(w * f + i) * n + c] = best_off;
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            p,
            src_len: t_len,
            out_t,
            f,
            n,
            offsets,
        },
    ))
}

/// Scatter each value of `y` to its stored argmax position; zeros elsewhere,
/// including any trailing remainder the pool dropped.
pub fn unpool_time(y: &SeriesTensor, indices: &PoolIndices, p: usize) -> Result<SeriesTensor> {
    if p != indices.p {
        return Err(Error::BadPoolLength {
            p,
            t_len: indices.src_len,
        });
    }
    if y.shape() != (indices.out_t, indices.f, indices.n) {
        return Err(Error::ShapeMismatch {
            context: format!(
                "unpool input {:?} vs indices ({}, {}, {})",
                y.shape(),
                indices.out_t,
                indices.f,
                indices.n
            ),
        });
    }
    let mut out = SeriesTensor::zeros(indices.src_len, indices.f, indices.n);
    for w in 0..indices.out_t {
        for i in 0..indices.f {
            for c in 0..indices.n {
                out.set(w * p + indices.offset(w, i, c), i, c, y.get(w, i, c));
            }
        }
    }
    Ok(out)
}

/// Backward of the pool: route upstream to the argmax positions. This is the
/// same scatter as unpooling.
pub fn maxpool_backward(upstream: &SeriesTensor, indices: &PoolIndices) -> Result<SeriesTensor> {
    unpool_time(upstream, indices, indices.p)
}

/// Backward of the unpool: gather upstream at the scattered positions.
pub fn unpool_backward(upstream: &SeriesTensor, indices: &PoolIndices) -> Result<SeriesTensor> {
    if upstream.shape() != (indices.src_len, indices.f, indices.n) {
        return Err(Error::ShapeMismatch {
            context: format!(
                "unpool upstream {:?} vs ({}, {}, {})",
                upstream.shape(),
                indices.src_len,
                indices.f,
                indices.n
            ),
        });
    }
    let mut out = SeriesTensor::zeros(indices.out_t, indices.f, indices.n);
    for w in 0..indices.out_t {
        for i in 0..indices.f {
            for c in 0..indices.n {
                out.set(w, i, c, upstream.get(w * indices.p + indices.offset(w, i, c), i, c));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(vals: &[f64]) -> SeriesTensor {
        let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
        SeriesTensor::from_rows(&rows, 1, 1).unwrap()
    }

    #[test]
    fn windowed_max_with_indices() {
        let (y, idx) = maxpool_time(&series(&[1.0, 3.0, 2.0, 0.0]), 2).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);
        assert_eq!(idx.offsets(), &[1, 0]);
    }

    #[test]
    fn unpool_scatters() {
        let (_, idx) = maxpool_time(&series(&[1.0, 3.0, 2.0, 0.0]), 2).unwrap();
        let y = series(&[3.0, 2.0]);
        let back = unpool_time(&y, &idx, 2).unwrap();
        assert_eq!(back.data(), &[0.0, 3.0, 2.0, 0.0]);
    }

    #[test]
    fn pool_len_one_is_identity() {
        let x = series(&[4.0, -1.0, 2.0]);
        let (y, idx) = maxpool_time(&x, 1).unwrap();
        assert_eq!(y, x);
        assert_eq!(unpool_time(&y, &idx, 1).unwrap(), x);
    }

    #[test]
    fn pool_after_unpool_recovers_nonnegative_values() {
        let x = series(&[0.5, 3.0, 2.0, 0.0, 7.0, 1.0, 4.0]); // remainder dropped
        let (y, idx) = maxpool_time(&x, 2).unwrap();
        let restored = unpool_time(&y, &idx, 2).unwrap();
        assert_eq!(restored.t_len(), 7);
        let (again, _) = maxpool_time(&restored, 2).unwrap();
        assert_eq!(again, y);
    }

    #[test]
    fn bad_pool_length() {
        let x = series(&[1.0, 2.0]);
        assert!(matches!(maxpool_time(&x, 0), Err(Error::BadPoolLength { .. })));
        assert!(matches!(maxpool_time(&x, 3), Err(Error::BadPoolLength { .. })));
    }

    #[test]
    fn backward_routes_to_argmax() {
        let (_, idx) = maxpool_time(&series(&[1.0, 3.0, 2.0, 0.0]), 2).unwrap();
        let up = series(&[10.0, 20.0]);
        let g = maxpool_backward(&up, &idx).unwrap();
        assert_eq!(g.data(), &[0.0, 10.0, 20.0, 0.0]);
        let gu = unpool_backward(&g, &idx).unwrap();
        assert_eq!(gu.data(), &[10.0, 20.0]);
    }
}
