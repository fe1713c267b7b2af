//! Synthetic ATM-like daily series, CSV ingestion, chronological splits,
//! and sliding-window batching.
//!
//! All randomness is seed-derived, so generation, splits, and batch
//! order are bit-reproducible. Windows never let an input timestep see
//! its own target (stride-1 sliding origins, targets strictly after
//! inputs), and normalization statistics come from the train partition
//! only.

use crate::date::Date;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

/// One daily univariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub start_date: Date,
    pub values: Vec<f64>,
}

/// A collection of daily series sharing one frequency.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesSet {
    pub series: Vec<Series>,
}

impl SeriesSet {
    /// Channel count of the window tensors built from this set.
    pub fn channels(&self) -> usize {
        1
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn validate(&self, min_len: usize) -> Result<()> {
        for s in &self.series {
            if s.values.len() < min_len {
                return Err(Error::InvalidArgument(format!(
                    "series `{}` has {} samples, need at least {min_len}",
                    s.id,
                    s.values.len()
                )));
            }
            if !s.values.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "series `{}` contains non-finite values",
                    s.id
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_series: usize,
    pub length: usize,
    pub seed: u64,
    /// Base demand level range (uniform per series).
    pub base_range: (f64, f64),
    /// Weekly seasonal swing as a fraction of the base level.
    pub weekly_frac_range: (f64, f64),
    /// Linear trend per day, centered on the series midpoint.
    pub trend_range: (f64, f64),
    /// Gaussian noise std as a fraction of the base level.
    pub noise_frac: f64,
    pub start_date: Date,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_series: 64,
            length: 730,
            seed: 1,
            base_range: (200.0, 400.0),
            weekly_frac_range: (0.1, 0.3),
            trend_range: (-0.1, 0.1),
            noise_frac: 0.04,
            start_date: Date::from_ymd(2022, 1, 3).unwrap(),
        }
    }
}

/// Zero-mean weekday demand pattern (Mon..Sun): quiet early week,
/// payday/weekend surge. Circularly anti-correlated at lag 3, so weekly
/// structure dominates any short-lag correlation.
const WEEKLY_PATTERN: [f64; 7] = [-0.8, -0.9, -0.6, -0.1, 0.9, 1.4, 0.1];

/// Generate `n_series` daily series of `length` days: base level plus a
/// weekly profile (period 7) plus a mild trend plus Gaussian noise,
/// clipped at zero. Deterministic per seed.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SeriesSet> {
    if cfg.n_series < 1 {
        return Err(Error::InvalidArgument("n_series must be ≥ 1".into()));
    }
    if cfg.length < 2 {
        return Err(Error::InvalidArgument(format!(
            "series length {} too short",
            cfg.length
        )));
    }
    let mut series = Vec::with_capacity(cfg.n_series);
    for s in 0..cfg.n_series {
        let mut rng = Rng::new(derive_seed(cfg.seed, s as u64));
        let base = rng.uniform(cfg.base_range.0, cfg.base_range.1);
        let weekly_frac = rng.uniform(cfg.weekly_frac_range.0, cfg.weekly_frac_range.1);
        let trend = rng.uniform(cfg.trend_range.0, cfg.trend_range.1);
        // Per-series jitter of the weekday pattern keeps series distinct
        // without destroying the weekly shape.
        let profile: Vec<f64> = WEEKLY_PATTERN
            .iter()
            .map(|&p| base * weekly_frac * p * (1.0 + 0.2 * rng.normal(0.0, 1.0)))
            .collect();
        let mid = cfg.length as f64 / 2.0;
        let values = (0..cfg.length)
            .map(|t| {
                let v = base
                    + profile[t % 7]
                    + trend * (t as f64 - mid)
                    + cfg.noise_frac * base * rng.normal(0.0, 1.0);
                v.max(0.0)
            })
            .collect();
        series.push(Series {
            id: format!("atm_{s:03}"),
            start_date: cfg.start_date,
            values,
        });
    }
    Ok(SeriesSet { series })
}

// ── CSV contract: header `series_id,date,value` ─────────────────────

/// Serialize a set in the CSV contract. Values use shortest
/// round-tripping decimal form, so load-after-write is exact.
pub fn to_csv(set: &SeriesSet) -> String {
    let mut out = String::from("series_id,date,value\n");
    for s in &set.series {
        for (t, v) in s.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", s.id, s.start_date.add_days(t as i64), v);
        }
    }
    out
}

pub fn write_csv(set: &SeriesSet, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(set))?;
    Ok(())
}

/// Parse the CSV contract. One series per distinct id; each series must
/// arrive in strictly increasing daily order with no gaps (no
/// imputation) and no duplicate (id, date) rows.
pub fn parse_csv(text: &str) -> Result<SeriesSet> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "series_id,date,value" => {}
        Some((_, header)) => {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header `series_id,date,value`, got `{header}`"),
            })
        }
        None => {
            return Err(Error::Csv {
                line: 1,
                message: "empty file".into(),
            })
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Series> = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(id), Some(date_s), Some(value_s), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Csv {
                line: line_no,
                message: format!("expected 3 comma-separated fields, got `{line}`"),
            });
        };
        let date = Date::parse(date_s).map_err(|e| Error::Csv {
            line: line_no,
            message: e.to_string(),
        })?;
        let value: f64 = value_s.trim().parse().map_err(|_| Error::Csv {
            line: line_no,
            message: format!("non-numeric value `{value_s}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::Csv {
                line: line_no,
                message: format!("non-finite value `{value_s}`"),
            });
        }
        match by_id.get_mut(id) {
            None => {
                order.push(id.to_string());
                by_id.insert(
                    id.to_string(),
                    Series {
                        id: id.to_string(),
                        start_date: date,
                        values: vec![value],
                    },
                );
            }
            Some(series) => {
                let expected = series.start_date.add_days(series.values.len() as i64);
                if date == expected {
                    series.values.push(value);
                } else if date < expected {
                    let last = series.start_date.add_days(series.values.len() as i64 - 1);
                    if date == last {
                        return Err(Error::Csv {
                            line: line_no,
                            message: format!("duplicate (id, date) row (`{id}`, {date})"),
                        });
                    }
                    return Err(Error::Csv {
                        line: line_no,
                        message: format!(
                            "dates for `{id}` are not increasing: {date} after {last}"
                        ),
                    });
                } else {
                    return Err(Error::Csv {
                        line: line_no,
                        message: format!(
                            "missing date for `{id}`: expected {expected}, got {date}"
                        ),
                    });
                }
            }
        }
    }
    if order.is_empty() {
        return Err(Error::Csv {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let series = order.into_iter().map(|id| by_id.remove(&id).unwrap()).collect();
    Ok(SeriesSet { series })
}

pub fn load_csv(path: &Path) -> Result<SeriesSet> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

// ── Chronological split ──────────────────────────────────────────────

/// Train/validation/test fractions; the split is chronological and
/// contiguous per series, train earliest and test latest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            val_frac: 0.10,
            test_frac: 0.20,
        }
    }
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<SplitSpec> {
        let sum = train_frac + val_frac + test_frac;
        if train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0 || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must be non-negative and sum to 1, got \
                 ({train_frac}, {val_frac}, {test_frac})"
            )));
        }
        Ok(SplitSpec {
            train_frac,
            val_frac,
            test_frac,
        })
    }

    /// Per-series sample counts: val and test round to nearest, train
    /// takes the exact remainder, keeping it within one sample of its
    /// fraction.
    pub fn partition_lengths(&self, n: usize) -> (usize, usize, usize) {
        let n_val = (self.val_frac * n as f64).round() as usize;
        let n_test = (self.test_frac * n as f64).round() as usize;
        (n - n_val - n_test, n_val, n_test)
    }
}

/// Split every series chronologically. Errors if any partition is
/// shorter than `min_len` (one window of T+H samples).
pub fn split(
    set: &SeriesSet,
    spec: &SplitSpec,
    min_len: usize,
) -> Result<(SeriesSet, SeriesSet, SeriesSet)> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for s in &set.series {
        let n = s.values.len();
        let (n_train, n_val, n_test) = spec.partition_lengths(n);
        for (name, len) in [("train", n_train), ("validation", n_val), ("test", n_test)] {
            if len < min_len {
                return Err(Error::InvalidArgument(format!(
                    "{name} partition of series `{}` has {len} samples, \
                     need at least {min_len}",
                    s.id
                )));
            }
        }
        let mk = |range: std::ops::Range<usize>| Series {
            id: s.id.clone(),
            start_date: s.start_date.add_days(range.start as i64),
            values: s.values[range].to_vec(),
        };
        train.push(mk(0..n_train));
        val.push(mk(n_train..n_train + n_val));
        test.push(mk(n_train + n_val..n));
    }
    Ok((
        SeriesSet { series: train },
        SeriesSet { series: val },
        SeriesSet { series: test },
    ))
}

// ── Windowing ────────────────────────────────────────────────────────

/// One (input, target) pair, contiguous in its source series.
#[derive(Debug, Clone)]
pub struct Window {
    pub series_idx: usize,
    pub origin: usize,
    /// T×C input window.
    pub input: Tensor,
    /// H×C forecast target, starting right after the input.
    pub target: Tensor,
}

/// A batch of windows.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub windows: Vec<Window>,
}

/// Deterministic stride-1 window stream over a set.
///
/// Series shorter than T+H are skipped and counted in `skipped_series`.
/// Each epoch reshuffles all origins with a seed derived from
/// (seed, epoch); the final partial batch is emitted.
pub struct WindowPlan {
    index: Vec<(usize, usize)>,
    t: usize,
    h: usize,
    batch_size: usize,
    seed: u64,
    pub skipped_series: usize,
}

impl WindowPlan {
    pub fn new(set: &SeriesSet, t: usize, h: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if t < 1 || h < 1 || batch_size < 1 {
            return Err(Error::InvalidArgument(
                "window length, horizon, and batch size must be ≥ 1".into(),
            ));
        }
        let mut index = Vec::new();
        let mut skipped = 0;
        for (s, series) in set.series.iter().enumerate() {
            if series.values.len() < t + h {
                skipped += 1;
                continue;
            }
            for origin in 0..=(series.values.len() - t - h) {
                index.push((s, origin));
            }
        }
        Ok(WindowPlan {
            index,
            t,
            h,
            batch_size,
            seed,
            skipped_series: skipped,
        })
    }

    pub fn total_windows(&self) -> usize {
        self.index.len()
    }

    pub fn window(&self, set: &SeriesSet, series_idx: usize, origin: usize) -> Window {
        let values = &set.series[series_idx].values;
        let input = Tensor::matrix(self.t, 1, values[origin..origin + self.t].to_vec()).unwrap();
        let target = Tensor::matrix(
            self.h,
            1,
            values[origin + self.t..origin + self.t + self.h].to_vec(),
        )
        .unwrap();
        Window {
            series_idx,
            origin,
            input,
            target,
        }
    }

    /// All windows in index order (unshuffled), for evaluation.
    pub fn all_windows(&self, set: &SeriesSet) -> Vec<Window> {
        self.index
            .iter()
            .map(|&(s, o)| self.window(set, s, o))
            .collect()
    }

    /// Shuffled batches for one epoch.
    pub fn batches<'a>(
        &'a self,
        set: &'a SeriesSet,
        epoch: usize,
    ) -> impl Iterator<Item = WindowBatch> + 'a {
        let mut order = self.index.clone();
        let mut rng = Rng::new(derive_seed(self.seed, epoch as u64));
        rng.shuffle(&mut order);
        (0..order.len().div_ceil(self.batch_size)).map(move |b| {
            let lo = b * self.batch_size;
            let hi = (lo + self.batch_size).min(order.len());
            WindowBatch {
                windows: order[lo..hi]
                    .iter()
                    .map(|&(s, o)| self.window(set, s, o))
                    .collect(),
            }
        })
    }
}

// ── Normalization ────────────────────────────────────────────────────

/// Per-series z-score statistics, computed from the train partition.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    by_id: HashMap<String, (f64, f64)>,
}

/// Std floor: constant series normalize to zeros instead of dividing
/// by zero.
const STD_FLOOR: f64 = 1e-8;

impl NormStats {
    /// Compute mean/std per series from the train partition only.
    pub fn from_train(train: &SeriesSet) -> Result<NormStats> {
        if train.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot compute normalization stats from an empty train partition".into(),
            ));
        }
        let mut by_id = HashMap::new();
        for s in &train.series {
            if s.values.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "train partition of `{}` is empty",
                    s.id
                )));
            }
            let n = s.values.len() as f64;
            let mean = s.values.iter().sum::<f64>() / n;
            let var = s.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            by_id.insert(s.id.clone(), (mean, var.sqrt().max(STD_FLOOR)));
        }
        Ok(NormStats { by_id })
    }

    pub fn get(&self, id: &str) -> Result<(f64, f64)> {
        self.by_id.get(id).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("no normalization stats for series `{id}`"))
        })
    }

    /// z-score a whole set with the train statistics.
    pub fn normalize(&self, set: &SeriesSet) -> Result<SeriesSet> {
        let mut series = Vec::with_capacity(set.len());
        for s in &set.series {
            let (mean, std) = self.get(&s.id)?;
            series.push(Series {
                id: s.id.clone(),
                start_date: s.start_date,
                values: s.values.iter().map(|v| (v - mean) / std).collect(),
            });
        }
        Ok(SeriesSet { series })
    }

    /// Exact inverse of [`NormStats::normalize`].
    pub fn denormalize_value(&self, id: &str, v: f64) -> Result<f64> {
        let (mean, std) = self.get(id)?;
        Ok(v * std + mean)
    }
}
