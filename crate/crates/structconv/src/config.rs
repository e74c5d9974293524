//! Run configuration: flat UTF-8 `key = value` files with `#` comments,
//! validated against a closed schema. Command-line `--key value` flags
//! override file values, and every command persists the fully resolved
//! configuration next to its outputs so a run can be reproduced from the
//! echo alone.

use std::path::{Path, PathBuf};

use crate::data;
use crate::error::{Error, Result};
use crate::models::{default_predictor_spec, default_scae_spec, Family, LayerSpec, ModelSpec};
use crate::optim::{self, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub family: Family,
    pub hop_k: usize,
    pub window: usize,
    pub horizon: usize,
    pub stride: usize,
    pub train_frac: f64,
    pub test_frac: f64,
    pub val_frac: f64,
    pub encoder_layers: Option<String>,
    pub decoder_layers: Option<String>,
    pub epochs: usize,
    pub batch_count: usize,
    pub batch_size: Option<usize>,
    pub l1_lambda: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub gen_len: usize,
    pub gen_noise_sd: f64,
    pub gen_coupling: f64,
    pub gen_amplitude: f64,
    pub predict_offsets: Vec<usize>,
    pub rec_layer: usize,
    pub rec_node: usize,
    pub rec_epsilon: f64,
    pub rec_points: usize,
    pub kernel_layer: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            graph: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
            family: Family::Scnn,
            hop_k: 1,
            window: data::DEFAULT_WINDOW,
            horizon: data::DEFAULT_HORIZON,
            stride: data::DEFAULT_STRIDE,
            train_frac: 0.55,
            test_frac: 0.35,
            val_frac: 0.10,
            encoder_layers: None,
            decoder_layers: None,
            epochs: optim::DEFAULT_EPOCHS,
            batch_count: optim::DEFAULT_BATCH_COUNT,
            batch_size: None,
            l1_lambda: optim::DEFAULT_L1_LAMBDA,
            alpha: optim::DEFAULT_ALPHA,
            beta1: optim::DEFAULT_BETA1,
            beta2: optim::DEFAULT_BETA2,
            adam_epsilon: optim::DEFAULT_ADAM_EPSILON,
            patience: optim::DEFAULT_PATIENCE,
            min_delta: optim::DEFAULT_MIN_DELTA,
            seed: 0,
            gen_len: 20_000,
            gen_noise_sd: 0.05,
            gen_coupling: 0.5,
            gen_amplitude: 0.5,
            predict_offsets: vec![0],
            rec_layer: 5,
            rec_node: 0,
            rec_epsilon: crate::analysis::DEFAULT_RECURRENCE_EPSILON,
            rec_points: 400,
            kernel_layer: 0,
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(key, format!("cannot parse {value:?}")))
}

impl RunConfig {
    /// Apply one `key = value` setting. Unknown keys are rejected; an empty
    /// value clears an optional key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt_path = |v: &str| -> Option<PathBuf> {
            if v.is_empty() {
                None
            } else {
                Some(PathBuf::from(v))
            }
        };
        match key {
            "data" => self.data = opt_path(value),
            "graph" => self.graph = opt_path(value),
            "checkpoint" => self.checkpoint = opt_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "family" => self.family = value.parse().map_err(|e: String| bad(key, e))?,
            "hop_k" => self.hop_k = parse_num(key, value)?,
            "window" => self.window = parse_num(key, value)?,
            "horizon" => self.horizon = parse_num(key, value)?,
            "stride" => self.stride = parse_num(key, value)?,
            "train_frac" => self.train_frac = parse_num(key, value)?,
            "test_frac" => self.test_frac = parse_num(key, value)?,
            "val_frac" => self.val_frac = parse_num(key, value)?,
            "encoder_layers" => {
                self.encoder_layers = (!value.is_empty()).then(|| value.to_string())
            }
            "decoder_layers" => {
                self.decoder_layers = (!value.is_empty()).then(|| value.to_string())
            }
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_count" => self.batch_count = parse_num(key, value)?,
            "batch_size" => {
                let v: usize = parse_num(key, value)?;
                self.batch_size = (v > 0).then_some(v);
            }
            "l1_lambda" => self.l1_lambda = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "adam_epsilon" => self.adam_epsilon = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "min_delta" => self.min_delta = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "gen_len" => self.gen_len = parse_num(key, value)?,
            "gen_noise_sd" => self.gen_noise_sd = parse_num(key, value)?,
            "gen_coupling" => self.gen_coupling = parse_num(key, value)?,
            "gen_amplitude" => self.gen_amplitude = parse_num(key, value)?,
            "predict_offsets" => {
                let mut offsets = Vec::new();
                for part in value.split(',') {
                    offsets.push(parse_num(key, part.trim())?);
                }
                self.predict_offsets = offsets;
            }
            "rec_layer" => self.rec_layer = parse_num(key, value)?,
            "rec_node" => self.rec_node = parse_num(key, value)?,
            "rec_epsilon" => self.rec_epsilon = parse_num(key, value)?,
            "rec_points" => self.rec_points = parse_num(key, value)?,
            "kernel_layer" => self.kernel_layer = parse_num(key, value)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Resolve defaults plus ordered `key = value` pairs (file values first,
    /// then command-line overrides).
    pub fn resolve(pairs: &[(String, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// The fully resolved configuration in the same `key = value` format the
    /// parser accepts.
    pub fn echo(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let opt_s = |s: &Option<String>| s.clone().unwrap_or_default();
        let mut out = String::from("# resolved configuration\n");
        let rows: Vec<(&str, String)> = vec![
            ("data", path(&self.data)),
            ("graph", path(&self.graph)),
            ("checkpoint", path(&self.checkpoint)),
            ("out_dir", self.out_dir.display().to_string()),
            ("family", self.family.as_str().to_string()),
            ("hop_k", self.hop_k.to_string()),
            ("window", self.window.to_string()),
            ("horizon", self.horizon.to_string()),
            ("stride", self.stride.to_string()),
            ("train_frac", self.train_frac.to_string()),
            ("test_frac", self.test_frac.to_string()),
            ("val_frac", self.val_frac.to_string()),
            ("encoder_layers", opt_s(&self.encoder_layers)),
            ("decoder_layers", opt_s(&self.decoder_layers)),
            ("epochs", self.epochs.to_string()),
            ("batch_count", self.batch_count.to_string()),
            ("batch_size", self.batch_size.unwrap_or(0).to_string()),
            ("l1_lambda", self.l1_lambda.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_epsilon", self.adam_epsilon.to_string()),
            ("patience", self.patience.to_string()),
            ("min_delta", self.min_delta.to_string()),
            ("seed", self.seed.to_string()),
            ("gen_len", self.gen_len.to_string()),
            ("gen_noise_sd", self.gen_noise_sd.to_string()),
            ("gen_coupling", self.gen_coupling.to_string()),
            ("gen_amplitude", self.gen_amplitude.to_string()),
            (
                "predict_offsets",
                self.predict_offsets
                    .iter()
                    .map(|o| o.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("rec_layer", self.rec_layer.to_string()),
            ("rec_node", self.rec_node.to_string()),
            ("rec_epsilon", self.rec_epsilon.to_string()),
            ("rec_points", self.rec_points.to_string()),
            ("kernel_layer", self.kernel_layer.to_string()),
        ];
        for (k, v) in rows {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn split_spec(&self) -> data::SplitSpec {
        data::SplitSpec {
            train: self.train_frac,
            test: self.test_frac,
            validation: self.val_frac,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_count: self.batch_count,
            batch_size: self.batch_size,
            l1_lambda: self.l1_lambda,
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
            patience: self.patience,
            min_delta: self.min_delta,
            seed: self.seed,
        }
    }

    /// Build the model spec this config describes for data with `f` nodes
    /// and `n` channels. Layer-token overrides replace the family defaults.
    pub fn model_spec(&self, f: usize, n: usize) -> Result<ModelSpec> {
        let head = self.horizon * f;
        let mut spec = match self.family {
            Family::Scae => default_scae_spec(f, n, self.window, self.hop_k),
            fam => default_predictor_spec(fam, f, n, self.window, self.horizon, self.hop_k),
        };
        if let Some(tokens) = &self.encoder_layers {
            spec.encoder = parse_layer_tokens(tokens, self.hop_k, head)?;
        }
        if let Some(tokens) = &self.decoder_layers {
            if self.family.is_predictor() {
                return Err(bad("decoder_layers", "predictor families take no decoder"));
            }
            spec.decoder = parse_layer_tokens(tokens, self.hop_k, head)?;
        }
        Ok(spec)
    }
}

/// Split on commas outside parentheses, so `sc(9,32),relu` yields two
/// tokens.
fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                if !cur.trim().is_empty() {
                    out.push(cur.trim().to_string());
                }
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Parse a comma-separated layer list: `sc(t,m)`, `tc(t,m)`, `tconv(t,m)`,
/// `relu`, `bn`, `pool(p)`, `unpool(p)`, `flatten`, `fc(d)`, and `fc(out)`
/// for a head sized to `horizon * F`.
pub fn parse_layer_tokens(tokens: &str, hop_k: usize, head_dim: usize) -> Result<Vec<LayerSpec>> {
    let key = "encoder_layers";
    let mut out = Vec::new();
    for tok in split_top_level(tokens) {
        let (name, args): (&str, Vec<String>) = match tok.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| bad(key, format!("unbalanced parentheses in {tok:?}")))?;
                (
                    name.trim(),
                    inner.split(',').map(|a| a.trim().to_string()).collect(),
                )
            }
            None => (tok.as_str(), vec![]),
        };
        let two = || -> Result<(usize, usize)> {
            if args.len() != 2 {
                return Err(bad(key, format!("{name} needs two arguments, got {tok:?}")));
            }
            Ok((parse_num(key, &args[0])?, parse_num(key, &args[1])?))
        };
        let one = || -> Result<usize> {
            if args.len() != 1 {
                return Err(bad(key, format!("{name} needs one argument, got {tok:?}")));
            }
            parse_num(key, &args[0])
        };
        out.push(match name {
            "sc" => {
                let (t, m) = two()?;
                LayerSpec::StructuralConv { t, m_out: m, hop_k }
            }
            "tc" => {
                let (t, m) = two()?;
                LayerSpec::TimeConv { t, m_out: m }
            }
            "tconv" => {
                let (t, m) = two()?;
                LayerSpec::TransposeConv { t, m_out: m, hop_k }
            }
            "relu" => LayerSpec::Relu,
            "bn" => LayerSpec::BatchNorm,
            "pool" => LayerSpec::MaxPool { p: one()? },
            "unpool" => LayerSpec::Unpool { p: one()? },
            "flatten" => LayerSpec::Flatten,
            "fc" => {
                if args.len() == 1 && args[0] == "out" {
                    LayerSpec::FullyConnected { out_dim: head_dim }
                } else {
                    LayerSpec::FullyConnected { out_dim: one()? }
                }
            }
            other => return Err(bad(key, format!("unknown layer kind {other:?}"))),
        });
    }
    if out.is_empty() {
        return Err(bad(key, "no layers given"));
    }
    Ok(out)
}

/// Read `key = value` pairs from a config file, skipping blank lines and
/// `#` comments.
pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile {
        path: path.to_path_buf(),
    })?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigError {
            key: format!("line {lineno}"),
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_module_constants() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.window, 500);
        assert_eq!(cfg.horizon, 100);
        assert_eq!(cfg.stride, 100);
        assert_eq!(cfg.batch_count, 32);
        assert_eq!(cfg.l1_lambda, 1e-4);
        assert_eq!(cfg.alpha, 1e-3);
        assert_eq!((cfg.train_frac, cfg.test_frac, cfg.val_frac), (0.55, 0.35, 0.10));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.set("windoww", "10"),
            Err(Error::ConfigError { .. })
        ));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("data", "series.csv").unwrap();
        cfg.set("family", "scae").unwrap();
        cfg.set("seed", "42").unwrap();
        cfg.set("alpha", "0.00273").unwrap();
        cfg.set("predict_offsets", "0,150,300").unwrap();
        let echoed = cfg.echo();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.config");
        std::fs::write(&path, echoed).unwrap();
        let back = RunConfig::resolve(&load_pairs(&path).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_after_file_win() {
        let pairs = vec![
            ("seed".to_string(), "1".to_string()),
            ("seed".to_string(), "2".to_string()),
        ];
        let cfg = RunConfig::resolve(&pairs).unwrap();
        assert_eq!(cfg.seed, 2);
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.config");
        std::fs::write(&path, "# a comment\n\nseed = 9\n  window = 64\n").unwrap();
        let cfg = RunConfig::resolve(&load_pairs(&path).unwrap()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.window, 64);
    }

    #[test]
    fn layer_tokens_parse() {
        let layers = parse_layer_tokens("sc(9,32), relu, bn, pool(2), flatten, fc(512), relu, fc(out)", 1, 110)
            .unwrap();
        assert_eq!(layers.len(), 8);
        assert_eq!(layers[0], LayerSpec::StructuralConv { t: 9, m_out: 32, hop_k: 1 });
        assert_eq!(layers[5], LayerSpec::FullyConnected { out_dim: 512 });
        assert_eq!(layers[7], LayerSpec::FullyConnected { out_dim: 110 });
    }

    #[test]
    fn layer_tokens_reject_junk() {
        assert!(parse_layer_tokens("sc(9)", 1, 10).is_err());
        assert!(parse_layer_tokens("dense(4)", 1, 10).is_err());
        assert!(parse_layer_tokens("fc", 1, 10).is_err());
        assert!(parse_layer_tokens("", 1, 10).is_err());
    }

    #[test]
    fn model_spec_uses_family_default() {
        let mut cfg = RunConfig::default();
        cfg.set("family", "tcnn").unwrap();
        cfg.set("window", "100").unwrap();
        cfg.set("horizon", "20").unwrap();
        let spec = cfg.model_spec(5, 1).unwrap();
        assert_eq!(spec.family, Family::Tcnn);
        assert!(matches!(spec.encoder[0], LayerSpec::TimeConv { t: 9, m_out: 32 }));
        assert!(spec.decoder.is_empty());
    }
}
