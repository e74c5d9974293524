//! Rank-3 time-series tensor and the elementwise primitives layers build on.
//!
//! A [`SeriesTensor`] is a dense 64-bit float array indexed
//! `[time][node][channel]` in row-major order: the flat index of
//! `(t, i, c)` is `(t * f + i) * n + c`. All arithmetic in the crate is
//! `f64` end to end.

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTensor {
    t_len: usize,
    f: usize,
    n: usize,
    data: Vec<f64>,
}

impl SeriesTensor {
    /// All-zero tensor. Dimensions must be positive.
    pub fn zeros(t_len: usize, f: usize, n: usize) -> SeriesTensor {
        assert!(t_len > 0 && f > 0 && n > 0, "zero dimension");
        SeriesTensor {
            t_len,
            f,
            n,
            data: vec![0.0; t_len * f * n],
        }
    }

    /// Build from one row per time step; each row holds `f * n` values in
    /// node-major order.
    pub fn from_rows(rows: &[Vec<f64>], f: usize, n: usize) -> Result<SeriesTensor> {
        if rows.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "from_rows: no rows".into(),
            });
        }
        let width = f * n;
        let mut data = Vec::with_capacity(rows.len() * width);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    context: format!("from_rows: row {t} has {} values, expected {width}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), f, n, data)
    }

    /// Build from a flat row-major buffer, rejecting NaN/Inf.
    pub fn from_flat(t_len: usize, f: usize, n: usize, data: Vec<f64>) -> Result<SeriesTensor> {
        if data.len() != t_len * f * n || t_len == 0 || f == 0 || n == 0 {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "from_flat: {} values for shape {t_len}x{f}x{n}",
                    data.len()
                ),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(SeriesTensor { t_len, f, n, data })
    }

    /// I.i.d. normal entries from the seeded stream, drawn in flat order.
    pub fn gaussian(rng: &mut Rng, t_len: usize, f: usize, n: usize, mean: f64, stddev: f64) -> SeriesTensor {
        assert!(stddev >= 0.0, "negative stddev");
        let mut out = SeriesTensor::zeros(t_len, f, n);
        for v in out.data.iter_mut() {
            *v = rng.normal(mean, stddev);
        }
        out
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t_len, self.f, self.n)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, t: usize, i: usize, c: usize) -> usize {
        (t * self.f + i) * self.n + c
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, c: usize) -> f64 {
        self.data[(t * self.f + i) * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, c: usize, v: f64) {
        self.data[(t * self.f + i) * self.n + c] = v;
    }

    /// The `f * n` values of one time step.
    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.f * self.n;
        &self.data[t * w..(t + 1) * w]
    }

    /// Copy of the time range `[start, start + len)`. The slice owns its data.
    pub fn slice_time(&self, start: usize, len: usize) -> Result<SeriesTensor> {
        if len == 0 || start + len > self.t_len {
            return Err(Error::IndexOutOfRange {
                index: start + len,
                len: self.t_len,
            });
        }
        let w = self.f * self.n;
        Ok(SeriesTensor {
            t_len: len,
            f: self.f,
            n: self.n,
            data: self.data[start * w..(start + len) * w].to_vec(),
        })
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> SeriesTensor {
        SeriesTensor {
            t_len: self.t_len,
            f: self.f,
            n: self.n,
            data: self.data.iter().map(|&v| op(v)).collect(),
        }
    }

    pub fn add(&self, other: &SeriesTensor) -> Result<SeriesTensor> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                context: format!("add: {:?} vs {:?}", self.shape(), other.shape()),
            });
        }
        Ok(SeriesTensor {
            t_len: self.t_len,
            f: self.f,
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, k: f64) -> SeriesTensor {
        self.map(|v| v * k)
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshaped(&self, t_len: usize, f: usize, n: usize) -> Result<SeriesTensor> {
        if t_len * f * n != self.data.len() {
            return Err(Error::DimensionMismatch {
                context: format!("reshape {:?} -> {t_len}x{f}x{n}", self.shape()),
            });
        }
        Ok(SeriesTensor {
            t_len,
            f,
            n,
            data: self.data.clone(),
        })
    }
}

/// Euclidean distance between two equal-length vectors.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: format!("l2_distance: {} vs {}", a.len(), b.len()),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn zeros_shape() {
        let z = SeriesTensor::zeros(2, 2, 1);
        assert_eq!(z.shape(), (2, 2, 1));
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_rows_row_major() {
        let x = SeriesTensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], 2, 1).unwrap();
        assert_eq!(x.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.get(1, 0, 0), 3.0);
    }

    #[test]
    fn from_rows_ragged() {
        let err = SeriesTensor::from_rows(&[vec![1.0, 2.0], vec![3.0]], 2, 1).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn from_flat_rejects_non_finite() {
        let err = SeriesTensor::from_flat(1, 2, 1, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }

    #[test]
    fn l2_three_four_five() {
        assert_eq!(l2_distance(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn identity_slice() {
        let mut rng = Rng::new(1);
        let x = SeriesTensor::gaussian(&mut rng, 5, 3, 2, 0.0, 1.0);
        assert_eq!(x.slice_time(0, 5).unwrap(), x);
    }

    #[test]
    fn add_scale_cancel() {
        let mut rng = Rng::new(2);
        let x = SeriesTensor::gaussian(&mut rng, 4, 2, 2, 1.0, 2.0);
        let z = x.add(&x.scale(-1.0)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_deterministic() {
        let a = SeriesTensor::gaussian(&mut Rng::new(9), 3, 3, 3, 0.0, 1.0);
        let b = SeriesTensor::gaussian(&mut Rng::new(9), 3, 3, 3, 0.0, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_zero_stddev_is_constant() {
        let x = SeriesTensor::gaussian(&mut Rng::new(4), 3, 2, 1, 2.5, 0.0);
        assert!(x.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn gaussian_moments() {
        let x = SeriesTensor::gaussian(&mut Rng::new(1), 10_000, 1, 1, 0.0, 1.0);
        let mean = x.data().iter().sum::<f64>() / 1e4;
        let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    proptest! {
        // Row-major layout law: flat index of (t, i, c) == (t*F + i)*N + c.
        #[test]
        fn layout_law(t_len in 1usize..5, f in 1usize..5, n in 1usize..4) {
            let mut x = SeriesTensor::zeros(t_len, f, n);
            let mut counter = 0.0;
            for t in 0..t_len {
                for i in 0..f {
                    for c in 0..n {
                        x.set(t, i, c, counter);
                        prop_assert_eq!(x.idx(t, i, c), (t * f + i) * n + c);
                        counter += 1.0;
                    }
                }
            }
            let expect: Vec<f64> = (0..t_len * f * n).map(|k| k as f64).collect();
            prop_assert_eq!(x.data(), &expect[..]);
        }
    }
}
