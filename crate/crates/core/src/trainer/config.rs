use std::fmt::Write as _;
use std::path::Path;

use crate::error::{JanusError, Result};
use crate::loss::{LossWeights, Variant};
use crate::model::{Backbone, EncoderConfig};

/// Graphs with more nodes than this train on sampled minibatches by default.
pub const FULL_BATCH_MAX_NODES: usize = 2048;
pub const DEFAULT_BATCH_SIZE: usize = 512;
pub const DEFAULT_FANOUTS: [usize; 2] = [10, 10];

const GRID_LR: [f64; 3] = [1e-4, 1e-3, 1e-2];
const GRID_LAYERS: [usize; 2] = [3, 5];
const GRID_HIDDEN: [usize; 2] = [8, 32];
const GRID_RW_DG: [usize; 2] = [4, 8];
const GRID_TAU: [f64; 3] = [0.3, 0.6, 1.0];
const GRID_LAMBDA1: [f64; 3] = [0.1, 0.01, 0.001];
const GRID_LAMBDA2: [f64; 1] = [1.0];

/// Every knob of a training run. Parsed from `key = value` text; keys match
/// the field names.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub layers: usize,
    pub hidden: usize,
    pub d_rw: usize,
    /// `None` selects the 95th-percentile degree of the graph.
    pub max_deg: Option<usize>,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `None` trains full-batch up to [`FULL_BATCH_MAX_NODES`] nodes.
    pub batch_size: Option<usize>,
    pub fanouts: Option<Vec<usize>>,
    pub seed: u64,
    pub backbone: Backbone,
    pub gin_eps: f64,
    pub variant: Variant,
    /// Restricts values to the published hyperparameter grid.
    pub grid_mode: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 300,
            layers: 3,
            hidden: 32,
            d_rw: 8,
            max_deg: None,
            tau: 0.6,
            lambda1: 0.01,
            lambda2: 1.0,
            batch_size: None,
            fanouts: None,
            seed: 0,
            backbone: Backbone::NormConv,
            gin_eps: 0.0,
            variant: Variant::Full,
            grid_mode: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| JanusError::config(key, format!("cannot parse `{value}`")))
}

fn in_grid_f64(key: &str, v: f64, grid: &[f64]) -> Result<()> {
    if grid.iter().any(|g| (g - v).abs() <= 1e-12 * g.abs()) {
        Ok(())
    } else {
        Err(JanusError::config(key, format!("{v} is not in the grid {grid:?}")))
    }
}

fn in_grid_usize(key: &str, v: usize, grid: &[usize]) -> Result<()> {
    if grid.contains(&v) {
        Ok(())
    } else {
        Err(JanusError::config(key, format!("{v} is not in the grid {grid:?}")))
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 16] = [
        "lr",
        "epochs",
        "layers",
        "hidden",
        "d_rw",
        "max_deg",
        "tau",
        "lambda1",
        "lambda2",
        "batch_size",
        "fanouts",
        "seed",
        "backbone",
        "gin_eps",
        "variant",
        "grid_mode",
    ];

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "d_rw" => self.d_rw = parse(key, value)?,
            "max_deg" => {
                self.max_deg = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "tau" => self.tau = parse(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "batch_size" => {
                self.batch_size = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "fanouts" => {
                self.fanouts = match value {
                    "auto" => None,
                    v => Some(
                        v.split(',')
                            .map(|f| parse::<usize>(key, f.trim()))
                            .collect::<Result<Vec<_>>>()?,
                    ),
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "backbone" => self.backbone = value.parse()?,
            "gin_eps" => self.gin_eps = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "grid_mode" => self.grid_mode = parse(key, value)?,
            other => {
                return Err(JanusError::config(other, "unknown configuration key"));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(JanusError::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: "expected `key = value`".into(),
                });
            };
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| JanusError::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_kv_text(&text, path)?;
        Ok(cfg)
    }

    /// Renders every field as `key = value`, in [`TrainConfig::KEYS`] order.
    pub fn to_kv_string(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |x| x.to_string());
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("lr", format!("{:?}", self.lr));
        put("epochs", self.epochs.to_string());
        put("layers", self.layers.to_string());
        put("hidden", self.hidden.to_string());
        put("d_rw", self.d_rw.to_string());
        put("max_deg", opt(self.max_deg));
        put("tau", format!("{:?}", self.tau));
        put("lambda1", format!("{:?}", self.lambda1));
        put("lambda2", format!("{:?}", self.lambda2));
        put("batch_size", opt(self.batch_size));
        put(
            "fanouts",
            self.fanouts.as_ref().map_or("auto".to_string(), |f| {
                f.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            }),
        );
        put("seed", self.seed.to_string());
        put("backbone", self.backbone.to_string());
        put("gin_eps", format!("{:?}", self.gin_eps));
        put("variant", self.variant.to_string());
        put("grid_mode", self.grid_mode.to_string());
        s
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            tau: self.tau,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            hidden: self.hidden,
            backbone: self.backbone,
            gin_eps: self.gin_eps,
        }
    }

    /// `Some((batch_size, fanouts))` when training on sampled minibatches.
    pub fn batching(&self, n: usize) -> Option<(usize, Vec<usize>)> {
        let fanouts = || self.fanouts.clone().unwrap_or_else(|| DEFAULT_FANOUTS.to_vec());
        match self.batch_size {
            Some(b) if b < n => Some((b, fanouts())),
            Some(_) => None,
            None if n > FULL_BATCH_MAX_NODES => Some((DEFAULT_BATCH_SIZE, fanouts())),
            None => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(JanusError::config("lr", "must be a finite value >= 0"));
        }
        if self.epochs == 0 {
            return Err(JanusError::config("epochs", "must be >= 1"));
        }
        if self.d_rw == 0 {
            return Err(JanusError::config("d_rw", "must be >= 1"));
        }
        if self.max_deg == Some(0) {
            return Err(JanusError::config("max_deg", "must be >= 1"));
        }
        if let Some(b) = self.batch_size {
            if b < 2 {
                return Err(JanusError::config("batch_size", "must be >= 2"));
            }
        }
        if let Some(f) = &self.fanouts {
            if f.is_empty() || f.contains(&0) {
                return Err(JanusError::config("fanouts", "need positive fanouts"));
            }
        }
        self.encoder().validate()?;
        self.weights().validate()?;

        if self.grid_mode {
            in_grid_f64("lr", self.lr, &GRID_LR)?;
            in_grid_usize("layers", self.layers, &GRID_LAYERS)?;
            in_grid_usize("hidden", self.hidden, &GRID_HIDDEN)?;
            in_grid_usize("d_rw", self.d_rw, &GRID_RW_DG)?;
            match self.max_deg {
                Some(m) => in_grid_usize("max_deg", m, &GRID_RW_DG)?,
                None => {
                    return Err(JanusError::config(
                        "max_deg",
                        "grid mode needs an explicit value from [4, 8]",
                    ))
                }
            }
            in_grid_f64("tau", self.tau, &GRID_TAU)?;
            in_grid_f64("lambda1", self.lambda1, &GRID_LAMBDA1)?;
            in_grid_f64("lambda2", self.lambda2, &GRID_LAMBDA2)?;
        }
        Ok(())
    }
}
