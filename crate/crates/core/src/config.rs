//! Experiment configuration: flat text with dotted section keys
//! (`train.learning_rate = 0.001`), one key per line, `#` comments.
//!
//! Every key has a default; unknown keys are rejected with their line
//! number. The canonical serialization (sorted keys, current values)
//! feeds the FNV-1a fingerprint embedded in every output artifact, so
//! any report can be traced to the exact config that produced it.

use crate::anomaly::AnomalyConfig;
use crate::datagen::{SplitSpec, SynthConfig};
use crate::date::Date;
use crate::error::{Error, Result};
use crate::model::{DecoderConfig, EncoderConfig};
use crate::trainer::{IlTlCombine, TrainConfig};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub csv_path: Option<PathBuf>,
    pub n_series: usize,
    pub length: usize,
    pub data_seed: u64,
    pub noise_frac: f64,
    pub base_range: (f64, f64),
    pub weekly_range: (f64, f64),
    pub trend_range: (f64, f64),
    pub start_date: Date,

    pub window_len: usize,
    pub horizon: usize,

    pub split: SplitSpec,

    pub latent_dim: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,

    pub anomaly: AnomalyConfig,

    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda: f64,
    pub p_aug: f64,
    pub forecast_on_augmented: bool,
    /// Start contrastive regimes from the NT checkpoint (pretrained
    /// variant) instead of from scratch.
    pub from_checkpoint: bool,
    pub normalize_latents: bool,
    pub force_unit_weights: bool,
    pub max_batches_per_epoch: usize,
    pub iltl_combine: IlTlCombine,

    /// Seeds for multi-run benchmarks.
    pub bench_seeds: Vec<u64>,
    /// Seed of the anomaly-affected test-set construction.
    pub eval_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let train = TrainConfig::default();
        ExperimentConfig {
            source: DataSource::Synthetic,
            csv_path: None,
            n_series: synth.n_series,
            length: synth.length,
            data_seed: synth.seed,
            noise_frac: synth.noise_frac,
            base_range: synth.base_range,
            weekly_range: synth.weekly_frac_range,
            trend_range: synth.trend_range,
            start_date: synth.start_date,
            window_len: 56,
            horizon: 14,
            split: SplitSpec::default(),
            latent_dim: 64,
            kernel_size: 3,
            dilations: vec![1, 2, 4, 8],
            anomaly: AnomalyConfig::default(),
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.early_stop_patience,
            lambda: train.lambda,
            p_aug: train.p_aug,
            forecast_on_augmented: train.forecast_on_augmented,
            from_checkpoint: false,
            normalize_latents: train.normalize_latents,
            force_unit_weights: train.force_unit_weights,
            max_batches_per_epoch: train.max_batches_per_epoch,
            iltl_combine: train.iltl_combine,
            bench_seeds: vec![0, 1, 2, 3, 4],
            eval_seed: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line_no}: expected `key = value`, got `{raw}`"
                )));
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        if let Some(csv) = &cfg.csv_path {
            if !csv.exists() {
                return Err(Error::Config(format!(
                    "data.csv_path `{}` does not exist",
                    csv.display()
                )));
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad =
            |what: &str| Error::Config(format!("key `{key}`: cannot parse `{value}` as {what}"));
        let f = || value.parse::<f64>().map_err(|_| bad("a number"));
        let u = || value.parse::<usize>().map_err(|_| bad("an integer"));
        let u64v = || value.parse::<u64>().map_err(|_| bad("an integer"));
        let b = || match value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad("a bool (true/false)")),
        };
        match key {
            "data.source" => {
                self.source = match value {
                    "synthetic" => DataSource::Synthetic,
                    "csv" => DataSource::Csv,
                    _ => return Err(bad("`synthetic` or `csv`")),
                }
            }
            "data.csv_path" => {
                self.csv_path = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "data.n_series" => self.n_series = u()?,
            "data.length" => self.length = u()?,
            "data.seed" => self.data_seed = u64v()?,
            "data.noise_frac" => self.noise_frac = f()?,
            "data.base_min" => self.base_range.0 = f()?,
            "data.base_max" => self.base_range.1 = f()?,
            "data.weekly_min" => self.weekly_range.0 = f()?,
            "data.weekly_max" => self.weekly_range.1 = f()?,
            "data.trend_min" => self.trend_range.0 = f()?,
            "data.trend_max" => self.trend_range.1 = f()?,
            "data.start_date" => self.start_date = Date::parse(value)?,
            "window.input_len" => self.window_len = u()?,
            "window.horizon" => self.horizon = u()?,
            "split.train" => self.split.train_frac = f()?,
            "split.val" => self.split.val_frac = f()?,
            "split.test" => self.split.test_frac = f()?,
            "model.latent_dim" => self.latent_dim = u()?,
            "model.kernel" => self.kernel_size = u()?,
            "model.dilations" => {
                self.dilations = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| bad("a dilation list")))
                    .collect::<Result<_>>()?
            }
            "anomaly.amplitude_mean" => self.anomaly.amplitude_mean = f()?,
            "anomaly.amplitude_std" => self.anomaly.amplitude_std = f()?,
            "anomaly.amplitude_min" => self.anomaly.amplitude_min = f()?,
            "anomaly.decay" => self.anomaly.decay = f()?,
            "anomaly.shape_mean" => self.anomaly.shape_mean = f()?,
            "anomaly.shape_std" => self.anomaly.shape_std = f()?,
            "anomaly.shape_min" => self.anomaly.shape_min = f()?,
            "anomaly.scale" => self.anomaly.scale = f()?,
            "anomaly.sigma_w" => self.anomaly.sigma_w = f()?,
            "train.learning_rate" => self.learning_rate = f()?,
            "train.batch_size" => self.batch_size = u()?,
            "train.max_epochs" => self.max_epochs = u()?,
            "train.patience" => self.patience = u()?,
            "train.lambda" => self.lambda = f()?,
            "train.p_aug" => self.p_aug = f()?,
            "train.forecast_on_augmented" => self.forecast_on_augmented = b()?,
            "train.from_checkpoint" => self.from_checkpoint = b()?,
            "train.normalize_latents" => self.normalize_latents = b()?,
            "train.force_unit_weights" => self.force_unit_weights = b()?,
            "train.max_batches_per_epoch" => self.max_batches_per_epoch = u()?,
            "train.iltl_combine" => {
                self.iltl_combine = match value {
                    "sum" => IlTlCombine::Sum,
                    "mean" => IlTlCombine::Mean,
                    _ => return Err(bad("`sum` or `mean`")),
                }
            }
            "bench.seeds" => {
                self.bench_seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().map_err(|_| bad("a seed list")))
                    .collect::<Result<_>>()?
            }
            "eval.seed" => self.eval_seed = u64v()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.source == DataSource::Csv && self.csv_path.is_none() {
            return Err(Error::Config(
                "data.source = csv requires data.csv_path".into(),
            ));
        }
        SplitSpec::new(
            self.split.train_frac,
            self.split.val_frac,
            self.split.test_frac,
        )?;
        if self.window_len < 1 || self.horizon < 1 {
            return Err(Error::Config(
                "window.input_len and window.horizon must be ≥ 1".into(),
            ));
        }
        if self.bench_seeds.is_empty() {
            return Err(Error::Config("bench.seeds must be non-empty".into()));
        }
        self.train_config(0).validate()?;
        Ok(())
    }

    /// Canonical serialization: every key, sorted, with current values.
    pub fn canonical_string(&self) -> String {
        let mut pairs: Vec<(String, String)> = vec![
            (
                "data.source".into(),
                match self.source {
                    DataSource::Synthetic => "synthetic".into(),
                    DataSource::Csv => "csv".into(),
                },
            ),
            (
                "data.csv_path".into(),
                self.csv_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("data.n_series".into(), self.n_series.to_string()),
            ("data.length".into(), self.length.to_string()),
            ("data.seed".into(), self.data_seed.to_string()),
            ("data.noise_frac".into(), self.noise_frac.to_string()),
            ("data.base_min".into(), self.base_range.0.to_string()),
            ("data.base_max".into(), self.base_range.1.to_string()),
            ("data.weekly_min".into(), self.weekly_range.0.to_string()),
            ("data.weekly_max".into(), self.weekly_range.1.to_string()),
            ("data.trend_min".into(), self.trend_range.0.to_string()),
            ("data.trend_max".into(), self.trend_range.1.to_string()),
            ("data.start_date".into(), self.start_date.to_string()),
            ("window.input_len".into(), self.window_len.to_string()),
            ("window.horizon".into(), self.horizon.to_string()),
            ("split.train".into(), self.split.train_frac.to_string()),
            ("split.val".into(), self.split.val_frac.to_string()),
            ("split.test".into(), self.split.test_frac.to_string()),
            ("model.latent_dim".into(), self.latent_dim.to_string()),
            ("model.kernel".into(), self.kernel_size.to_string()),
            (
                "model.dilations".into(),
                self.dilations
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "anomaly.amplitude_mean".into(),
                self.anomaly.amplitude_mean.to_string(),
            ),
            (
                "anomaly.amplitude_std".into(),
                self.anomaly.amplitude_std.to_string(),
            ),
            (
                "anomaly.amplitude_min".into(),
                self.anomaly.amplitude_min.to_string(),
            ),
            ("anomaly.decay".into(), self.anomaly.decay.to_string()),
            ("anomaly.shape_mean".into(), self.anomaly.shape_mean.to_string()),
            ("anomaly.shape_std".into(), self.anomaly.shape_std.to_string()),
            ("anomaly.shape_min".into(), self.anomaly.shape_min.to_string()),
            ("anomaly.scale".into(), self.anomaly.scale.to_string()),
            ("anomaly.sigma_w".into(), self.anomaly.sigma_w.to_string()),
            ("train.learning_rate".into(), self.learning_rate.to_string()),
            ("train.batch_size".into(), self.batch_size.to_string()),
            ("train.max_epochs".into(), self.max_epochs.to_string()),
            ("train.patience".into(), self.patience.to_string()),
            ("train.lambda".into(), self.lambda.to_string()),
            ("train.p_aug".into(), self.p_aug.to_string()),
            (
                "train.forecast_on_augmented".into(),
                self.forecast_on_augmented.to_string(),
            ),
            (
                "train.from_checkpoint".into(),
                self.from_checkpoint.to_string(),
            ),
            (
                "train.normalize_latents".into(),
                self.normalize_latents.to_string(),
            ),
            (
                "train.force_unit_weights".into(),
                self.force_unit_weights.to_string(),
            ),
            (
                "train.max_batches_per_epoch".into(),
                self.max_batches_per_epoch.to_string(),
            ),
            (
                "train.iltl_combine".into(),
                match self.iltl_combine {
                    IlTlCombine::Sum => "sum".into(),
                    IlTlCombine::Mean => "mean".into(),
                },
            ),
            (
                "bench.seeds".into(),
                self.bench_seeds
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eval.seed".into(), self.eval_seed.to_string()),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Stable hash of the canonical serialization.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.canonical_string().as_bytes())
    }

    // ── Views into subsystem configs ─────────────────────────────

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_series: self.n_series,
            length: self.length,
            seed: self.data_seed,
            base_range: self.base_range,
            weekly_frac_range: self.weekly_range,
            trend_range: self.trend_range,
            noise_frac: self.noise_frac,
            start_date: self.start_date,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            input_channels: 1,
            latent_dim: self.latent_dim,
            kernel_size: self.kernel_size,
            dilations: self.dilations.clone(),
        }
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            horizon: self.horizon,
            output_channels: 1,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.patience,
            lambda: self.lambda,
            seed,
            p_aug: self.p_aug,
            forecast_on_augmented: self.forecast_on_augmented,
            normalize_latents: self.normalize_latents,
            force_unit_weights: self.force_unit_weights,
            max_batches_per_epoch: self.max_batches_per_epoch,
            iltl_combine: self.iltl_combine,
        }
    }
}
