//! Experiment configuration: a flat TOML table, every key optional.
//!
//! Unknown keys are rejected, and every invariant is checked when the file is
//! loaded. Invariant errors name the offending keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{index_bits, CodecConfig};
use crate::error::{Error, Result};
use crate::model::{DatasetParams, MlpShape};
use crate::polar::CrcSpec;
use crate::spreading::DEFAULT_MEMORY_BUDGET;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    PolarAir,
    Dense,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::PolarAir => "polarair",
            Mode::Dense => "dense",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "polarair" => Ok(Mode::PolarAir),
            "dense" => Ok(Mode::Dense),
            other => Err(format!("unknown mode `{other}` (expected polarair or dense)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSourceKind {
    /// MLP trained on the synthetic mixture.
    ToyModel,
    /// Each worker draws K random indices with Gaussian values.
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    pub gradient_source: GradientSourceKind,

    // Codec.
    pub n: usize,
    pub k: usize,
    pub b_f: usize,
    pub b_s: usize,
    pub crc_width: usize,
    /// Generator without its leading term; defaults per width (0x07 for 8).
    pub crc_poly: Option<u64>,
    pub n_c: usize,
    pub l: usize,
    pub n_list: usize,
    pub power: f64,
    pub max_sic_iters: usize,
    pub dict_memory_budget: usize,

    // Channel.
    pub noise_std: f64,
    pub normalizer_eps: f64,

    // Federated loop.
    pub workers: usize,
    pub epochs: usize,
    /// Rounds per epoch C; 0 derives it from shard and batch sizes.
    pub rounds_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub adaptive_policy: bool,
    /// Scale the recovered estimate by 1/W before the update (PolarAir only).
    pub rescale_by_workers: bool,
    /// Channel uses charged per Dense round; 0 means N.
    pub dense_channel_uses: usize,

    // Model and data.
    pub d_in: usize,
    pub d_h: usize,
    pub d_out: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub mean_radius: f64,
    pub cluster_std: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let codec = CodecConfig::desk_default();
        Self {
            seed: 0,
            mode: Mode::PolarAir,
            gradient_source: GradientSourceKind::ToyModel,
            n: codec.n,
            k: codec.k,
            b_f: codec.b_f,
            b_s: codec.b_s,
            crc_width: 8,
            crc_poly: None,
            n_c: codec.n_c,
            l: codec.l,
            n_list: codec.n_list,
            power: codec.power,
            max_sic_iters: codec.max_sic_iters,
            dict_memory_budget: DEFAULT_MEMORY_BUDGET,
            noise_std: 1.0,
            normalizer_eps: crate::channel::DEFAULT_NORMALIZER_EPS,
            workers: 4,
            epochs: 10,
            rounds_per_epoch: 0,
            batch_size: 32,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            adaptive_policy: true,
            rescale_by_workers: false,
            dense_channel_uses: 0,
            d_in: 16,
            d_h: 32,
            d_out: 4,
            train_size: 4096,
            test_size: 1000,
            mean_radius: 3.0,
            cluster_std: 1.0,
        }
    }
}

fn invariant<T>(keys: &[&str], message: impl Into<String>) -> Result<T> {
    Err(Error::ConfigInvariant {
        keys: keys.iter().map(|k| k.to_string()).collect(),
        message: message.into(),
    })
}

impl ExperimentConfig {
    pub fn shape(&self) -> MlpShape {
        MlpShape {
            d_in: self.d_in,
            d_h: self.d_h,
            d_out: self.d_out,
        }
    }

    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams {
            classes: self.d_out,
            dim: self.d_in,
            workers: self.workers,
            train_size: self.train_size,
            test_size: self.test_size,
            mean_radius: self.mean_radius,
            cluster_std: self.cluster_std,
            seed: self.seed,
        }
    }

    pub fn crc(&self) -> Result<Option<CrcSpec>> {
        if self.crc_width == 0 {
            return Ok(None);
        }
        let spec = match self.crc_poly {
            Some(poly) => CrcSpec::new(self.crc_width, poly, 0),
            None => CrcSpec::default_for_width(self.crc_width).ok_or_else(|| {
                Error::InvalidConfig(format!("no default polynomial for width {}", self.crc_width))
            }),
        };
        spec.map(Some).or_else(|e| invariant(&["crc_width", "crc_poly"], e.to_string()))
    }

    /// Codec parameters for the given spreading length and block length.
    pub fn codec_config(&self, l: usize, n_c: usize) -> Result<CodecConfig> {
        Ok(CodecConfig {
            n: self.n,
            k: self.k,
            b_f: self.b_f,
            b_s: self.b_s,
            crc: self.crc()?,
            n_c,
            l,
            n_list: self.n_list,
            power: self.power,
            seed: self.seed,
            max_sic_iters: self.max_sic_iters,
            dict_memory_budget: self.dict_memory_budget,
        })
    }

    /// Length of the gradient the source actually produces.
    pub fn gradient_dim(&self) -> usize {
        match self.gradient_source {
            GradientSourceKind::ToyModel => self.shape().num_params(),
            GradientSourceKind::Synthetic => self.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invariant(&["n"], format!("N = {} must be at least 2", self.n));
        }
        if self.b_f + self.b_s != index_bits(self.n) {
            return invariant(
                &["b_f", "b_s"],
                format!(
                    "b_f + b_s = {} must equal ceil(log2 n) = {}",
                    self.b_f + self.b_s,
                    index_bits(self.n)
                ),
            );
        }
        if self.n_c == 0 || !self.n_c.is_power_of_two() {
            return invariant(&["n_c"], format!("{} is not a power of two", self.n_c));
        }
        self.crc()?;
        if self.b_f + self.crc_width == 0 || self.b_f + self.crc_width > self.n_c {
            return invariant(
                &["b_f", "crc_width", "n_c"],
                format!("b_f + crc_width = {} must be in 1..=n_c", self.b_f + self.crc_width),
            );
        }
        if self.k == 0 || self.k > self.n {
            return invariant(&["k"], format!("K = {} must be in 1..=N", self.k));
        }
        for (key, v) in [
            ("l", self.l),
            ("n_list", self.n_list),
            ("max_sic_iters", self.max_sic_iters),
            ("workers", self.workers),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return invariant(&[key], "must be at least 1");
            }
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return invariant(&["power"], "must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return invariant(&["noise_std"], "must be non-negative");
        }
        if !(self.normalizer_eps > 0.0) {
            return invariant(&["normalizer_eps"], "must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return invariant(&["lr"], "must be positive");
        }
        if self.gradient_source == GradientSourceKind::ToyModel {
            if self.d_in == 0 || self.d_h == 0 || self.d_out < 2 {
                return invariant(&["d_in", "d_h", "d_out"], "need d_in, d_h ≥ 1 and d_out ≥ 2");
            }
            if self.shape().num_params() > self.n {
                return invariant(
                    &["n", "d_in", "d_h", "d_out"],
                    format!(
                        "model has {} parameters, more than N = {}",
                        self.shape().num_params(),
                        self.n
                    ),
                );
            }
            if !(self.cluster_std > 0.0) {
                return invariant(&["cluster_std"], "must be positive");
            }
            if self.train_size < self.workers * self.batch_size {
                return invariant(
                    &["train_size", "workers", "batch_size"],
                    "every worker needs at least one full batch",
                );
            }
            if self.test_size == 0 {
                return invariant(&["test_size"], "must be at least 1");
            }
        }
        self.codec_config(self.l, self.n_c)?
            .validate()
            .or_else(|e| invariant(&["n", "k", "b_f", "b_s", "n_c", "l"], e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ConfigMissing {
            path: path.to_path_buf(),
        },
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| Error::ConfigParse {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}
