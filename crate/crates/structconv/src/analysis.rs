//! Evaluation metrics, recurrence matrices, kernel sparsity reporting, and
//! heatmap export.

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::tensor::{l2_distance, SeriesTensor};

/// Aggregate and sliced RMSE plus R-squared for a set of `[H, F]`
/// predictions against targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub aggregate_rmse: f64,
    /// RMSE per horizon step (length H).
    pub per_step_rmse: Vec<f64>,
    /// RMSE per feature (length F).
    pub per_feature_rmse: Vec<f64>,
    /// `1 - SSE / SST`, with SST about the targets' mean.
    pub r_squared: f64,
}

/// Compute RMSE aggregates over `K` prediction/target pairs of shape
/// `[H, F, 1]` (or `[H, F, N]`, with channels folded into features).
pub fn rmse_report(preds: &[SeriesTensor], targets: &[SeriesTensor]) -> Result<MetricReport> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            context: format!("{} predictions vs {} targets", preds.len(), targets.len()),
        });
    }
    let shape = preds[0].shape();
    for (p, t) in preds.iter().zip(targets) {
        if p.shape() != shape || t.shape() != shape {
            return Err(Error::ShapeMismatch {
                context: format!("mixed shapes {:?} vs {:?}", p.shape(), t.shape()),
            });
        }
    }
    let (h, f, n) = shape;
    let feat = f * n;
    let k = preds.len() as f64;

    let mut sse = 0.0;
    let mut per_step = vec![0.0; h];
    let mut per_feature = vec![0.0; feat];
    let mut target_sum = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        for step in 0..h {
            for j in 0..feat {
                let idx = step * feat + j;
                let d = p.data()[idx] - t.data()[idx];
                sse += d * d;
                per_step[step] += d * d;
                per_feature[j] += d * d;
                target_sum += t.data()[idx];
            }
        }
    }
    let total = k * (h * feat) as f64;
    let target_mean = target_sum / total;
    let mut sst = 0.0;
    for t in targets {
        for &v in t.data() {
            sst += (v - target_mean) * (v - target_mean);
        }
    }
    let r_squared = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(MetricReport {
        aggregate_rmse: (sse / total).sqrt(),
        per_step_rmse: per_step
            .into_iter()
            .map(|s| (s / (k * feat as f64)).sqrt())
            .collect(),
        per_feature_rmse: per_feature
            .into_iter()
            .map(|s| (s / (k * h as f64)).sqrt())
            .collect(),
        r_squared,
    })
}

impl MetricReport {
    /// CSV with one `metric,index,value` row per entry.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("metric,index,value\n");
        out.push_str(&format!("aggregate_rmse,,{}\n", self.aggregate_rmse));
        out.push_str(&format!("r_squared,,{}\n", self.r_squared));
        for (s, v) in self.per_step_rmse.iter().enumerate() {
            out.push_str(&format!("per_step_rmse,{s},{v}\n"));
        }
        for (f, v) in self.per_feature_rmse.iter().enumerate() {
            out.push_str(&format!("per_feature_rmse,{f},{v}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

pub const DEFAULT_RECURRENCE_EPSILON: f64 = 1e-4;

/// Boolean matrix marking time pairs whose activation vectors lie within
/// `epsilon` in Euclidean norm. Symmetric with an all-true diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceMatrix {
    n: usize,
    epsilon: f64,
    bits: Vec<bool>,
}

impl RecurrenceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// 0/1 matrix for export.
    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(u8::from(b))).collect()
    }
}

/// `bits[i][j] = 1` iff `||a(t_i) - a(t_j)||_2 <= epsilon`.
pub fn recurrence(activations: &[Vec<f64>], epsilon: f64) -> Result<RecurrenceMatrix> {
    if activations.is_empty() {
        return Err(Error::RaggedInput {
            index: 0,
            got: 0,
            expected: 1,
        });
    }
    assert!(epsilon >= 0.0, "negative recurrence threshold");
    let dim = activations[0].len();
    for (index, a) in activations.iter().enumerate() {
        if a.len() != dim {
            return Err(Error::RaggedInput {
                index,
                got: a.len(),
                expected: dim,
            });
        }
    }
    let n = activations.len();
    let mut bits = vec![false; n * n];
    for i in 0..n {
        bits[i * n + i] = true;
        for j in 0..i {
            let close = l2_distance(&activations[i], &activations[j])? <= epsilon;
            bits[i * n + j] = close;
            bits[j * n + i] = close;
        }
    }
    Ok(RecurrenceMatrix {
        n,
        epsilon,
        bits,
    })
}

pub const DEFAULT_SPARSITY_TAU: f64 = 1e-3;

/// Near-zero statistics for one convolution layer's unmasked kernel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSparsity {
    pub layer: usize,
    /// Fraction of unmasked weights with `|w| < tau`.
    pub near_zero_fraction: f64,
    pub near_zero_count: usize,
    /// Unmasked weights that are exactly zero.
    pub exact_zero_count: usize,
    pub unmasked_count: usize,
}

/// Per-layer fraction of unmasked convolution weights below `tau` in
/// magnitude. Masked positions never enter the denominator.
pub fn sparsity_report(params: &ModelParams, tau: f64) -> Vec<LayerSparsity> {
    assert!(tau > 0.0, "sparsity threshold must be positive");
    params
        .conv_kernels()
        .into_iter()
        .map(|(layer, k)| {
            let mut near = 0usize;
            let mut exact = 0usize;
            let mut total = 0usize;
            for i in 0..k.f() {
                for s in 0..k.t() {
                    for &j in k.neighbors(i) {
                        for c in 0..k.n_in() {
                            for m in 0..k.m_out() {
                                let w = k.weights()[k.w_idx(i, s, j, c, m)];
                                total += 1;
                                if w == 0.0 {
                                    exact += 1;
                                }
                                if w.abs() < tau {
                                    near += 1;
                                }
                            }
                        }
                    }
                }
            }
            LayerSparsity {
                layer,
                near_zero_fraction: near as f64 / total as f64,
                near_zero_count: near,
                exact_zero_count: exact,
                unmasked_count: total,
            }
        })
        .collect()
}

/// Overall near-zero fraction across every convolution layer.
pub fn overall_sparsity(report: &[LayerSparsity]) -> f64 {
    let near: usize = report.iter().map(|r| r.near_zero_count).sum();
    let total: usize = report.iter().map(|r| r.unmasked_count).sum();
    near as f64 / total.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    Pgm,
}

/// Export a row-major matrix as exact-decimal CSV or as a P2 PGM with
/// `[min, max]` rescaled linearly onto `[0, 255]` (constant matrices map
/// to 0).
pub fn export_heatmap(
    data: &[f64],
    rows: usize,
    cols: usize,
    path: &Path,
    format: HeatmapFormat,
) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: format!("heatmap {}x{} vs {} values", rows, cols, data.len()),
        });
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut out = String::new();
    match format {
        HeatmapFormat::Csv => {
            for r in 0..rows {
                let row: Vec<String> = (0..cols).map(|c| format!("{:.16e}", data[r * cols + c])).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        HeatmapFormat::Pgm => {
            let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let scale = max - min;
            out.push_str(&format!("P2\n{cols} {rows}\n255\n"));
            for r in 0..rows {
                let row: Vec<String> = (0..cols)
                    .map(|c| {
                        let v = data[r * cols + c];
                        let px = if scale > 0.0 {
                            ((v - min) / scale * 255.0).round() as u32
                        } else {
                            0
                        };
                        px.to_string()
                    })
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman_rank(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DimensionMismatch {
            context: format!("spearman: {} vs {}", xs.len(), ys.len()),
        });
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}
