//! Data pipeline: CSV ingestion, contiguous train/test/validation splits,
//! per-feature standardization, sliding windows, and a synthetic
//! graph-coupled series generator.
//!
//! Standardizer statistics come from the training split only and are applied
//! to every split; predictions are made in standardized units and inverse-
//! transformed before metrics, so nothing about the test data leaks into
//! training.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{bfs_distance, csv_error, Graph};
use crate::rng::Rng;
use crate::tensor::SeriesTensor;

pub const DEFAULT_WINDOW: usize = 500;
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_STRIDE: usize = 100;

/// Contiguous split proportions, train | test | validation in time order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.55,
            test: 0.35,
            validation: 0.10,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train <= 0.0 || self.test <= 0.0 || self.validation <= 0.0 {
            return Err(Error::BadSplit {
                context: format!(
                    "fractions must be positive, got {}/{}/{}",
                    self.train, self.test, self.validation
                ),
            });
        }
        let sum = self.train + self.test + self.validation;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::BadSplit {
                context: format!("fractions sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Split a series into contiguous train | test | validation ranges of
/// `floor(train * T)`, `floor(test * T)` and the remaining steps.
pub fn split_contiguous(
    x: &SeriesTensor,
    spec: &SplitSpec,
) -> Result<(SeriesTensor, SeriesTensor, SeriesTensor)> {
    spec.validate()?;
    let t = x.t_len();
    if t < 3 {
        return Err(Error::TooShort { t_len: t, needed: 3 });
    }
    let n_train = (spec.train * t as f64).floor() as usize;
    let n_test = (spec.test * t as f64).floor() as usize;
    let n_val = t - n_train - n_test;
    if n_train == 0 || n_test == 0 || n_val == 0 {
        return Err(Error::TooShort { t_len: t, needed: 3 });
    }
    Ok((
        x.slice_time(0, n_train)?,
        x.slice_time(n_train, n_test)?,
        x.slice_time(n_train + n_test, n_val)?,
    ))
}

/// Per-feature affine map to zero mean and unit variance, fitted on the
/// training split only. Construction is the fit, so an unfitted transform
/// cannot be expressed.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &SeriesTensor) -> Result<Standardizer> {
        let (t_len, f, n) = train.shape();
        let feat = f * n;
        let mut mean = vec![0.0; feat];
        for t in 0..t_len {
            for (m, v) in mean.iter_mut().zip(train.row(t)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= t_len as f64;
        }
        let mut var = vec![0.0; feat];
        for t in 0..t_len {
            for (k, v) in train.row(t).iter().enumerate() {
                let d = v - mean[k];
                var[k] += d * d;
            }
        }
        let mut std = vec![0.0; feat];
        for (k, v) in var.iter().enumerate() {
            let s = (v / t_len as f64).sqrt();
            if s <= 0.0 {
                return Err(Error::ConstantFeature { index: k });
            }
            std[k] = s;
        }
        Ok(Standardizer { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    fn check(&self, x: &SeriesTensor) -> Result<()> {
        let (_, f, n) = x.shape();
        if f * n != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "standardizer fitted on {} features, input has {}",
                    self.mean.len(),
                    f * n
                ),
            });
        }
        Ok(())
    }

    /// `(x - mean) / std` per feature.
    pub fn transform(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        self.check(x)?;
        let feat = self.mean.len();
        let mut out = x.clone();
        for (idx, v) in out.data_mut().iter_mut().enumerate() {
            let k = idx % feat;
            *v = (*v - self.mean[k]) / self.std[k];
        }
        Ok(out)
    }

    /// Exact inverse of [`Standardizer::transform`].
    pub fn inverse_transform(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        self.check(x)?;
        let feat = self.mean.len();
        let mut out = x.clone();
        for (idx, v) in out.data_mut().iter_mut().enumerate() {
            let k = idx % feat;
            *v = *v * self.std[k] + self.mean[k];
        }
        Ok(out)
    }

    /// Inverse-transform a predictor output of shape `[H, F, 1]` produced
    /// from data with `n` channels. With `n == 1` the feature layout matches
    /// and this is the plain inverse.
    pub fn inverse_transform_prediction(&self, pred: &SeriesTensor) -> Result<SeriesTensor> {
        self.check(pred)?;
        self.inverse_transform(pred)
    }
}

/// One (input window, target horizon) pair with its source offset.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub input: SeriesTensor,
    pub target: SeriesTensor,
    /// Time index of the window start in the source series.
    pub source_start: usize,
}

/// Sliding windows at a fixed stride; each pair's target is the horizon
/// immediately after its input window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub pairs: Vec<WindowPair>,
    pub window: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn inputs(&self) -> Vec<SeriesTensor> {
        self.pairs.iter().map(|p| p.input.clone()).collect()
    }

    pub fn targets(&self) -> Vec<SeriesTensor> {
        self.pairs.iter().map(|p| p.target.clone()).collect()
    }

    /// Targets reshaped to `[H, F, 1]` for single-channel predictor training.
    pub fn prediction_targets(&self) -> Result<Vec<SeriesTensor>> {
        self.pairs
            .iter()
            .map(|p| {
                let (h, f, n) = p.target.shape();
                if n != 1 {
                    return Err(Error::DimensionMismatch {
                        context: format!("prediction targets need one channel, got {n}"),
                    });
                }
                p.target.reshaped(h, f, 1)
            })
            .collect()
    }
}

/// Pairs at offsets `0, stride, 2*stride, ...`; the count is
/// `floor((T - window - horizon) / stride) + 1`.
pub fn make_windows(
    x: &SeriesTensor,
    window: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowSet> {
    assert!(window > 0 && horizon > 0 && stride > 0, "zero window parameter");
    let t = x.t_len();
    if t < window + horizon {
        return Err(Error::TooShort {
            t_len: t,
            needed: window + horizon,
        });
    }
    let count = (t - window - horizon) / stride + 1;
    let mut pairs = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * stride;
        pairs.push(WindowPair {
            input: x.slice_time(start, window)?,
            target: x.slice_time(start + window, horizon)?,
            source_start: start,
        });
    }
    Ok(WindowSet {
        pairs,
        window,
        horizon,
        stride,
    })
}

/// Read a series from CSV. The header names `F * N` columns; plain names
/// mean one channel per node, while a consistent `node.channel` convention
/// (e.g. `a.0,a.1,b.0,b.1`) yields `N > 1`.
pub fn load_csv(path: &Path) -> Result<SeriesTensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|_| Error::MissingFile {
            path: path.to_path_buf(),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 0))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() {
        return Err(Error::EmptyFile);
    }
    let (f, n) = infer_layout(&headers);
    let width = headers.len();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 1; // header is line 0
        let record = record.map_err(|e| csv_error(e, line))?;
        if record.len() != width {
            return Err(Error::RaggedRow {
                row: line,
                got: record.len(),
                expected: width,
            });
        }
        let mut row = Vec::with_capacity(width);
        for (c, field) in record.iter().enumerate() {
            row.push(field.parse::<f64>().map_err(|_| Error::ParseError {
                row: line,
                col: c,
                message: format!("not a number: {field:?}"),
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    SeriesTensor::from_rows(&rows, f, n)
}

/// Columns follow the `node.channel` convention only if every name has an
/// integer after its last dot, nodes appear in contiguous node-major blocks,
/// and every node lists channels `0..N` in order.
fn infer_layout(headers: &[String]) -> (usize, usize) {
    let parsed: Option<Vec<(&str, usize)>> = headers
        .iter()
        .map(|h| {
            let (name, chan) = h.rsplit_once('.')?;
            let chan: usize = chan.parse().ok()?;
            if name.is_empty() {
                return None;
            }
            Some((name, chan))
        })
        .collect();
    let Some(parsed) = parsed else {
        return (headers.len(), 1);
    };
    let mut nodes: Vec<&str> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (name, chan) in &parsed {
        match nodes.last() {
            Some(last) if last == name => {
                if *chan != counts[nodes.len() - 1] {
                    return (headers.len(), 1);
                }
                counts[nodes.len() - 1] += 1;
            }
            _ => {
                if *chan != 0 || nodes.contains(name) {
                    return (headers.len(), 1);
                }
                nodes.push(name);
                counts.push(1);
            }
        }
    }
    let n = counts[0];
    if n > 0 && counts.iter().all(|&c| c == n) {
        (nodes.len(), n)
    } else {
        (headers.len(), 1)
    }
}

/// Write a series as CSV with 17-significant-digit decimals, which round-trip
/// `f64` exactly. Column names are `j<i>` for single-channel data and
/// `j<i>.<c>` otherwise.
pub fn save_csv(x: &SeriesTensor, path: &Path) -> Result<()> {
    let (t_len, f, n) = x.shape();
    let mut out = String::new();
    let mut names = Vec::with_capacity(f * n);
    for i in 0..f {
        for c in 0..n {
            names.push(if n == 1 {
                format!("j{i}")
            } else {
                format!("j{i}.{c}")
            });
        }
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for t in 0..t_len {
        let row: Vec<String> = x.row(t).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Synthetic graph-coupled series: each node blends its own value with the
/// mean of its 1-hop neighbors, plus a per-node sinusoid and Gaussian noise:
///
/// ```text
/// x[t+1][i] = (1 - rho) * x[t][i] + rho * mean_{j in nbr(i)} x[t][j]
///             + amplitude * sin(2 pi t / P_i + phi_i) + noise
/// ```
///
/// with periods `P_i` drawn from `{40..80}`, phases uniform in `[0, 2 pi)`,
/// and `x[0] ~ N(0, 1)`. Neighbor means exclude the node itself. The same
/// seed yields the same series.
pub fn synth_coupled(
    g: &Graph,
    t_len: usize,
    seed: u64,
    noise_sd: f64,
    rho: f64,
    amplitude: f64,
) -> Result<SeriesTensor> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::BadCoupling { rho });
    }
    let dist = bfs_distance(g, 0)?;
    if let Some(node) = dist.iter().position(|d| d.is_none()) {
        return Err(Error::DisconnectedGraph { node });
    }
    assert!(t_len > 0, "empty series");
    let f = g.f();
    let mut rng = Rng::new(seed);
    let periods: Vec<f64> = (0..f).map(|_| rng.int_in(40, 80) as f64).collect();
    let phases: Vec<f64> = (0..f).map(|_| rng.uniform_in(0.0, std::f64::consts::TAU)).collect();
    let neighbors: Vec<Vec<usize>> = (0..f).map(|i| g.neighbors(i)).collect();

    let mut x = SeriesTensor::zeros(t_len, f, 1);
    for i in 0..f {
        x.set(0, i, 0, rng.normal(0.0, 1.0));
    }
    for t in 0..t_len.saturating_sub(1) {
        for i in 0..f {
            let own = x.get(t, i, 0);
            let nbr_mean = if neighbors[i].is_empty() {
                0.0
            } else {
                neighbors[i].iter().map(|&j| x.get(t, j, 0)).sum::<f64>()
                    / neighbors[i].len() as f64
            };
            let drive = amplitude
                * (std::f64::consts::TAU * (t as f64 / periods[i]) + phases[i]).sin();
            let noise = rng.normal(0.0, noise_sd);
            x.set(t + 1, i, 0, (1.0 - rho) * own + rho * nbr_mean + drive + noise);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::five_node_example;

    fn ramp(t_len: usize, f: usize) -> SeriesTensor {
        let mut x = SeriesTensor::zeros(t_len, f, 1);
        for t in 0..t_len {
            for i in 0..f {
                x.set(t, i, 0, (t * f + i) as f64 * 0.1 - 3.0);
            }
        }
        x
    }

    #[test]
    fn split_paper_proportions() {
        let x = ramp(1000, 2);
        let (tr, te, va) = split_contiguous(&x, &SplitSpec::default()).unwrap();
        assert_eq!((tr.t_len(), te.t_len(), va.t_len()), (550, 350, 100));
        // Contiguity: test picks up exactly where train ends.
        assert_eq!(te.get(0, 0, 0), x.get(550, 0, 0));
        assert_eq!(va.get(0, 0, 0), x.get(900, 0, 0));
    }

    #[test]
    fn split_floor_arithmetic() {
        let x = ramp(20, 1);
        let (tr, te, va) = split_contiguous(&x, &SplitSpec::default()).unwrap();
        assert_eq!((tr.t_len(), te.t_len(), va.t_len()), (11, 7, 2));
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let x = ramp(100, 1);
        let spec = SplitSpec {
            train: 1.0,
            test: 0.0,
            validation: 0.0,
        };
        assert!(matches!(split_contiguous(&x, &spec), Err(Error::BadSplit { .. })));
    }

    #[test]
    fn standardize_train_statistics() {
        let mut rng = Rng::new(1);
        let x = SeriesTensor::gaussian(&mut rng, 500, 3, 2, 4.0, 2.5);
        let s = Standardizer::fit(&x).unwrap();
        let z = s.transform(&x).unwrap();
        let feat = 6;
        for k in 0..feat {
            let vals: Vec<f64> = (0..500).map(|t| z.data()[t * feat + k]).collect();
            let mean = vals.iter().sum::<f64>() / 500.0;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 500.0;
            assert!(mean.abs() <= 1e-9);
            assert!((var - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn standardize_round_trip() {
        let mut rng = Rng::new(2);
        let x = SeriesTensor::gaussian(&mut rng, 100, 2, 1, -1.0, 3.0);
        let s = Standardizer::fit(&x).unwrap();
        let back = s.inverse_transform(&s.transform(&x).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn transform_of_mean_is_zero() {
        let mut rng = Rng::new(3);
        let train = SeriesTensor::gaussian(&mut rng, 50, 2, 1, 2.0, 1.0);
        let s = Standardizer::fit(&train).unwrap();
        let mut at_mean = SeriesTensor::zeros(4, 2, 1);
        for t in 0..4 {
            for i in 0..2 {
                at_mean.set(t, i, 0, s.mean()[i]);
            }
        }
        let z = s.transform(&at_mean).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_feature_rejected() {
        let mut x = ramp(10, 2);
        for t in 0..10 {
            x.set(t, 1, 0, 7.0);
        }
        assert!(matches!(
            Standardizer::fit(&x),
            Err(Error::ConstantFeature { index: 1 })
        ));
    }

    #[test]
    fn standardizer_ignores_other_splits() {
        // Statistics depend on the train split alone.
        let x = ramp(1000, 2);
        let (train, _, _) = split_contiguous(&x, &SplitSpec::default()).unwrap();
        let s1 = Standardizer::fit(&train).unwrap();
        let mut tampered = x.clone();
        for t in 600..900 {
            tampered.set(t, 0, 0, 1e6);
        }
        let (train2, _, _) = split_contiguous(&tampered, &SplitSpec::default()).unwrap();
        let s2 = Standardizer::fit(&train2).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn window_counts() {
        let x = ramp(700, 1);
        let w = make_windows(&x, DEFAULT_WINDOW, DEFAULT_HORIZON, DEFAULT_STRIDE).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.pairs[0].source_start, 0);
        assert_eq!(w.pairs[1].source_start, 100);
        // Target follows its window immediately.
        assert_eq!(w.pairs[0].target.get(0, 0, 0), x.get(500, 0, 0));
        assert_eq!(w.pairs[1].target.get(0, 0, 0), x.get(600, 0, 0));

        let one = make_windows(&ramp(600, 1), 500, 100, 100).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(
            make_windows(&ramp(599, 1), 500, 100, 100),
            Err(Error::TooShort { t_len: 599, needed: 600 })
        ));
    }

    #[test]
    fn windows_align_with_source() {
        let x = ramp(300, 2);
        let w = make_windows(&x, 40, 10, 25).unwrap();
        for pair in &w.pairs {
            assert_eq!(
                pair.target.get(0, 0, 0),
                x.get(pair.source_start + 40, 0, 0)
            );
            assert_eq!(pair.input.t_len(), 40);
            assert_eq!(pair.target.t_len(), 10);
        }
    }

    #[test]
    fn csv_round_trip_single_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let mut rng = Rng::new(4);
        let x = SeriesTensor::gaussian(&mut rng, 30, 3, 1, 0.0, 5.0);
        save_csv(&x, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.shape(), (30, 3, 1));
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn csv_multi_channel_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mc.csv");
        std::fs::write(&path, "a.0,a.1,b.0,b.1\n1,2,3,4\n5,6,7,8\n").unwrap();
        let x = load_csv(&path).unwrap();
        assert_eq!(x.shape(), (2, 2, 2));
        assert_eq!(x.get(1, 1, 0), 7.0);
    }

    #[test]
    fn csv_plain_header_is_single_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sc.csv");
        std::fs::write(&path, "j0,j1\n1,2\n3,4\n5,6\n").unwrap();
        let x = load_csv(&path).unwrap();
        assert_eq!(x.shape(), (3, 2, 1));
    }

    #[test]
    fn csv_parse_error_locates_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "j0,j1\n1,2\n3,abc\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        assert!(matches!(err, Error::ParseError { row: 2, col: 1, .. }));
    }

    #[test]
    fn csv_ragged_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "j0,j1\n1,2\n3\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { .. } | Error::ParseError { .. }));
    }

    #[test]
    fn csv_empty_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "j0,j1\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::EmptyFile)));
    }

    #[test]
    fn synth_degenerate_dynamics_are_constant() {
        let g = five_node_example();
        let x = synth_coupled(&g, 50, 7, 0.0, 0.0, 0.0).unwrap();
        for i in 0..5 {
            let v0 = x.get(0, i, 0);
            for t in 1..50 {
                assert_eq!(x.get(t, i, 0), v0);
            }
        }
    }

    #[test]
    fn synth_same_seed_same_series() {
        let g = five_node_example();
        let a = synth_coupled(&g, 200, 11, 0.05, 0.5, 0.5).unwrap();
        let b = synth_coupled(&g, 200, 11, 0.05, 0.5, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_rejects_bad_coupling() {
        let g = five_node_example();
        assert!(matches!(
            synth_coupled(&g, 10, 1, 0.0, 1.0, 0.5),
            Err(Error::BadCoupling { .. })
        ));
        assert!(matches!(
            synth_coupled(&g, 10, 1, 0.0, -0.1, 0.5),
            Err(Error::BadCoupling { .. })
        ));
    }

    #[test]
    fn synth_rejects_disconnected_graph() {
        let g = Graph::validate(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            synth_coupled(&g, 10, 1, 0.0, 0.5, 0.5),
            Err(Error::DisconnectedGraph { node: 1 })
        ));
    }

    fn lag1_corr(x: &SeriesTensor, i: usize, j: usize) -> f64 {
        // Pearson correlation of x_i[t] against x_j[t+1].
        let t = x.t_len() - 1;
        let a: Vec<f64> = (0..t).map(|k| x.get(k, i, 0)).collect();
        let b: Vec<f64> = (0..t).map(|k| x.get(k + 1, j, 0)).collect();
        let ma = a.iter().sum::<f64>() / t as f64;
        let mb = b.iter().sum::<f64>() / t as f64;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for k in 0..t {
            cov += (a[k] - ma) * (b[k] - mb);
            va += (a[k] - ma) * (a[k] - ma);
            vb += (b[k] - mb) * (b[k] - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn neighbors_carry_more_lagged_signal_than_distant_pair() {
        // Median over seeds: lag-1 cross-correlation along edges beats the
        // non-adjacent pair (2, 4).
        let g = five_node_example();
        let edges = [(0usize, 1usize), (0, 4), (1, 2), (1, 3), (3, 4)];
        let mut nbr_medians = Vec::new();
        let mut far_medians = Vec::new();
        for seed in 0..5 {
            let x = synth_coupled(&g, 4000, seed, 0.05, 0.5, 0.5).unwrap();
            let nbr: f64 = edges
                .iter()
                .map(|&(i, j)| 0.5 * (lag1_corr(&x, i, j).abs() + lag1_corr(&x, j, i).abs()))
                .sum::<f64>()
                / edges.len() as f64;
            let far = 0.5 * (lag1_corr(&x, 2, 4).abs() + lag1_corr(&x, 4, 2).abs());
            nbr_medians.push(nbr);
            far_medians.push(far);
        }
        nbr_medians.sort_by(f64::total_cmp);
        far_medians.sort_by(f64::total_cmp);
        assert!(
            nbr_medians[2] > far_medians[2],
            "neighbor lag-corr {} vs distant {}",
            nbr_medians[2],
            far_medians[2]
        );
    }
}
