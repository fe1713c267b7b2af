//! Optimization loop: Adam, early stopping on normal-data validation
//! MAE, and the training regimes.
//!
//! Regimes:
//! - `NT`   — forecast MAE on normal windows only.
//! - `FT`   — continue from an NT checkpoint, forecast MAE on
//!   anomaly-augmented windows only (inputs and targets augmented).
//! - `CL-IL` — joint objective with unit weights (instance loss);
//!   forecast loss averaged over both views.
//! - `WECA` — joint objective with distance-derived weights, same
//!   forecast treatment as CL-IL.
//! - `ABL-IL` / `ABL-TL` / `ABL-ILTL` — contrastive-term ablations.
//!
//! Every stochastic choice (shuffling, augmentation) draws from a
//! stream derived from (seed, purpose, epoch), so regimes consuming
//! different streams still see identical batch order and repeated runs
//! are bit-identical.

use crate::anomaly::{self, AnomalyConfig, AugmentedPair};
use crate::datagen::{SeriesSet, Window, WindowPlan};
use crate::diffcore::{Tape, Tensor, ValueId};
use crate::error::{Error, Result};
use crate::losses::{
    forecast_mae_on_tape, instance_loss_on_tape, temporal_loss_on_tape, weca_loss_on_tape,
    LossConfig,
};
use crate::model::{init_params, BoundModel, DecoderConfig, EncoderConfig, ModelParams};
use crate::rng::{derive_seed, Rng};
use std::fmt;
use std::fmt::Write as _;
use std::time::Instant;

// Seed-stream tags.
const STREAM_INIT: u64 = 0x11;
const STREAM_SHUFFLE: u64 = 0x22;
const STREAM_AUG: u64 = 0x33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Nt,
    Ft,
    ClIl,
    Weca,
    AblIl,
    AblTl,
    AblIlTl,
}

impl Regime {
    pub const ALL: [Regime; 7] = [
        Regime::Nt,
        Regime::Ft,
        Regime::ClIl,
        Regime::Weca,
        Regime::AblIl,
        Regime::AblTl,
        Regime::AblIlTl,
    ];

    pub fn parse(s: &str) -> Result<Regime> {
        match s.to_ascii_uppercase().as_str() {
            "NT" => Ok(Regime::Nt),
            "FT" => Ok(Regime::Ft),
            "CL-IL" | "CLIL" => Ok(Regime::ClIl),
            "WECA" => Ok(Regime::Weca),
            "ABL-IL" => Ok(Regime::AblIl),
            "ABL-TL" => Ok(Regime::AblTl),
            "ABL-ILTL" => Ok(Regime::AblIlTl),
            other => Err(Error::InvalidArgument(format!(
                "unknown regime `{other}` (expected NT, FT, CL-IL, WECA, ABL-IL, ABL-TL, ABL-ILTL)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Nt => "NT",
            Regime::Ft => "FT",
            Regime::ClIl => "CL-IL",
            Regime::Weca => "WECA",
            Regime::AblIl => "ABL-IL",
            Regime::AblTl => "ABL-TL",
            Regime::AblIlTl => "ABL-ILTL",
        }
    }

    /// Regimes with a contrastive term and paired views.
    pub fn is_contrastive(&self) -> bool {
        !matches!(self, Regime::Nt | Regime::Ft)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the IL+TL ablation combines its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IlTlCombine {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Fraction of training windows that receive an anomaly in
    /// contrastive regimes (FT augments every window).
    pub p_aug: f64,
    /// Compute the forecast loss on the augmented view's target too
    /// (averaged with the original view).
    pub forecast_on_augmented: bool,
    pub normalize_latents: bool,
    /// Ablation hook: force all similarity weights to exactly 1.
    pub force_unit_weights: bool,
    /// Cap on shuffled batches consumed per epoch (0 = no cap); a
    /// desk-scale lever, the stream itself always covers every window.
    pub max_batches_per_epoch: usize,
    pub iltl_combine: IlTlCombine,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 10,
            lambda: 1.0,
            seed: 0,
            p_aug: 0.5,
            forecast_on_augmented: true,
            normalize_latents: true,
            force_unit_weights: false,
            max_batches_per_epoch: 0,
            iltl_combine: IlTlCombine::Sum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.early_stop_patience < 1 {
            return Err(Error::InvalidArgument("patience must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_aug) {
            return Err(Error::InvalidArgument("p_aug must lie in [0, 1]".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument("λ must be ≥ 0".into()));
        }
        Ok(())
    }
}

// ── Adam ─────────────────────────────────────────────────────────────

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment buffers mirroring the parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> AdamState {
        let sizes: Vec<usize> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| t.numel())
            .collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. `grads` follow the canonical tensor
/// order of [`ModelParams::named_tensors`].
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let names: Vec<String> = params
        .named_tensors()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    if grads.len() != names.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} gradient tensors, got {}",
            names.len(),
            grads.len()
        )));
    }
    for (name, g) in names.iter().zip(grads) {
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::Train(format!(
                "non-finite gradient for parameter `{name}`"
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for ((tensor, g), (m, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((p, &gv), mv), vv) in tensor
            .data_mut()
            .iter_mut()
            .zip(g)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
            *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

// ── Batch construction ───────────────────────────────────────────────

/// Pair every window with an (anomalous or identity) augmented view.
///
/// `always` injects into every window (the FT regime); otherwise each
/// window is augmented with probability `p_aug`. The rng stream must be
/// dedicated to augmentation so consuming it cannot perturb batch order.
pub fn augment_batch(
    windows: &[Window],
    p_aug: f64,
    always: bool,
    rng: &mut Rng,
    cfg: &AnomalyConfig,
) -> Result<Vec<AugmentedPair>> {
    windows
        .iter()
        .map(|w| {
            if always || rng.chance(p_aug) {
                let params = anomaly::sample_params(rng, cfg, w.input.rows());
                anomaly::inject(&w.input, &w.target, &params, params.onset, cfg)
            } else {
                Ok(anomaly::identity_pair(&w.input, &w.target))
            }
        })
        .collect()
}

// ── Training log ─────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub lr: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub regime: Regime,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
}

impl TrainingLog {
    /// One CSV row per epoch. Wall-clock lives only here, never in
    /// reports, so reports stay byte-reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_mae,lr,wall_ms\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_mae, e.lr, e.wall_ms
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: TrainingLog,
}

/// Everything a run consumes: normalized train/val partitions and the
/// window geometry.
pub struct TrainData {
    pub train: SeriesSet,
    pub val: SeriesSet,
    pub window_len: usize,
    pub horizon: usize,
}

// ── The training loop ────────────────────────────────────────────────

/// Train one regime. `init` must carry the NT checkpoint for FT and is
/// ignored (must be None) otherwise unless the caller explicitly wants
/// warm-starting.
pub fn train(
    regime: Regime,
    data: &TrainData,
    encoder: &EncoderConfig,
    decoder: &DecoderConfig,
    cfg: &TrainConfig,
    anomaly_cfg: &AnomalyConfig,
    init: Option<ModelParams>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    data.train.validate(data.window_len + data.horizon)?;
    data.val.validate(data.window_len + data.horizon)?;

    let mut params = match (regime, init) {
        (Regime::Ft, Some(p)) => p,
        (Regime::Ft, None) => {
            return Err(Error::Train(
                "FT requires the NT checkpoint to fine-tune from".into(),
            ))
        }
        (_, Some(p)) => p,
        (_, None) => init_params(encoder, decoder, derive_seed(cfg.seed, STREAM_INIT))?,
    };

    let plan = WindowPlan::new(
        &data.train,
        data.window_len,
        data.horizon,
        cfg.batch_size,
        derive_seed(cfg.seed, STREAM_SHUFFLE),
    )?;
    let val_plan = WindowPlan::new(&data.val, data.window_len, data.horizon, cfg.batch_size, 0)?;
    let val_windows = val_plan.all_windows(&data.val);

    let loss_cfg = LossConfig {
        normalize_latents: cfg.normalize_latents,
    };
    let mut adam = AdamState::new(&params);
    let mut log = TrainingLog {
        regime,
        seed: cfg.seed,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_mae: f64::INFINITY,
    };
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let mut aug_rng = Rng::new(derive_seed(
            derive_seed(cfg.seed, STREAM_AUG),
            epoch as u64,
        ));
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for batch in plan.batches(&data.train, epoch) {
            if cfg.max_batches_per_epoch > 0 && n_batches >= cfg.max_batches_per_epoch {
                break;
            }
            let loss = train_batch(
                regime,
                &batch.windows,
                &mut params,
                &mut adam,
                cfg,
                anomaly_cfg,
                &loss_cfg,
                &mut aug_rng,
            )
            .map_err(|e| {
                // divergence surfaces as a non-finite op output or a
                // non-finite gradient; either way, point at the
                // last-good checkpoint
                Error::Train(format!(
                    "{e} (epoch {epoch}, batch {n_batches}; restore the last saved \
                     checkpoint, best epoch {})",
                    log.best_epoch
                ))
            })?;
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "loss diverged to {loss} at epoch {epoch}, batch {n_batches}; \
                     restore the last saved checkpoint (best epoch {})",
                    log.best_epoch
                )));
            }
            loss_sum += loss;
            n_batches += 1;
        }

        let val_mae = mean_forecast_mae(&params, &val_windows)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / n_batches.max(1) as f64,
            val_mae,
            lr: cfg.learning_rate,
            wall_ms: started.elapsed().as_millis(),
        });

        if val_mae < log.best_val_mae {
            log.best_val_mae = val_mae;
            log.best_epoch = epoch;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        log,
    })
}

/// Mean forecast MAE over a window list (normalized space, no grads).
pub fn mean_forecast_mae(params: &ModelParams, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument(
            "validation needs at least one window".into(),
        ));
    }
    let mut total = 0.0;
    for w in windows {
        let mut tape = Tape::new();
        let bound = BoundModel::bind(&mut tape, params)?;
        let x = tape.leaf(w.input.clone())?;
        let pred = bound.forward(&mut tape, x)?;
        let y = tape.leaf(w.target.clone())?;
        let mae = forecast_mae_on_tape(&mut tape, pred, y)?;
        total += tape.value(mae).item();
    }
    Ok(total / windows.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn train_batch(
    regime: Regime,
    windows: &[Window],
    params: &mut ModelParams,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    anomaly_cfg: &AnomalyConfig,
    loss_cfg: &LossConfig,
    aug_rng: &mut Rng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, params)?;
    let b = windows.len();

    let loss = match regime {
        Regime::Nt => {
            let mut acc: Option<ValueId> = None;
            for w in windows {
                let x = tape.leaf(w.input.clone())?;
                let pred = bound.forward(&mut tape, x)?;
                let y = tape.leaf(w.target.clone())?;
                let mae = forecast_mae_on_tape(&mut tape, pred, y)?;
                acc = Some(match acc {
                    None => mae,
                    Some(a) => tape.add(a, mae)?,
                });
            }
            tape.scale(acc.unwrap(), 1.0 / b as f64)?
        }
        Regime::Ft => {
            let pairs = augment_batch(windows, cfg.p_aug, true, aug_rng, anomaly_cfg)?;
            let mut acc: Option<ValueId> = None;
            for pair in &pairs {
                let x = tape.leaf(pair.augmented_input.clone())?;
                let pred = bound.forward(&mut tape, x)?;
                let y = tape.leaf(pair.augmented_target.clone())?;
                let mae = forecast_mae_on_tape(&mut tape, pred, y)?;
                acc = Some(match acc {
                    None => mae,
                    Some(a) => tape.add(a, mae)?,
                });
            }
            tape.scale(acc.unwrap(), 1.0 / b as f64)?
        }
        _ => {
            let pairs = augment_batch(windows, cfg.p_aug, false, aug_rng, anomaly_cfg)?;
            let mut z_ids = Vec::with_capacity(b);
            let mut zt_ids = Vec::with_capacity(b);
            let mut forecast_acc: Option<ValueId> = None;
            for pair in &pairs {
                let x = tape.leaf(pair.original_input.clone())?;
                let z = bound.encode(&mut tape, x)?;
                // identity pairs share the latent node; gradients
                // accumulate identically to a re-encode of equal input
                let zt = if pair.augmented_input == pair.original_input {
                    z
                } else {
                    let xt = tape.leaf(pair.augmented_input.clone())?;
                    bound.encode(&mut tape, xt)?
                };
                z_ids.push(z);
                zt_ids.push(zt);

                let pred = bound.decode(&mut tape, z)?;
                let y = tape.leaf(pair.original_target.clone())?;
                let mut mae = forecast_mae_on_tape(&mut tape, pred, y)?;
                if cfg.forecast_on_augmented {
                    let pred_aug = bound.decode(&mut tape, zt)?;
                    let y_aug = tape.leaf(pair.augmented_target.clone())?;
                    let mae_aug = forecast_mae_on_tape(&mut tape, pred_aug, y_aug)?;
                    let both = tape.add(mae, mae_aug)?;
                    mae = tape.scale(both, 0.5)?;
                }
                forecast_acc = Some(match forecast_acc {
                    None => mae,
                    Some(a) => tape.add(a, mae)?,
                });
            }
            let forecast_term = tape.scale(forecast_acc.unwrap(), 1.0 / b as f64)?;

            if cfg.lambda == 0.0 {
                forecast_term
            } else {
                let t_len = tape.value(z_ids[0]).rows();
                let weights = if regime == Regime::Weca && !cfg.force_unit_weights {
                    Tensor::from_rows(
                        &pairs.iter().map(|p| p.weights.clone()).collect::<Vec<_>>(),
                    )?
                } else {
                    Tensor::full(vec![b, t_len], 1.0)
                };
                let contrastive = match regime {
                    Regime::Weca | Regime::ClIl | Regime::AblIl => {
                        weca_loss_on_tape(&mut tape, &z_ids, &zt_ids, &weights, loss_cfg)?
                    }
                    Regime::AblTl => {
                        temporal_loss_on_tape(&mut tape, &z_ids, &zt_ids, loss_cfg)?
                    }
                    Regime::AblIlTl => {
                        let il = instance_loss_on_tape(&mut tape, &z_ids, &zt_ids, loss_cfg)?;
                        let tl = temporal_loss_on_tape(&mut tape, &z_ids, &zt_ids, loss_cfg)?;
                        let sum = tape.add(il, tl)?;
                        match cfg.iltl_combine {
                            IlTlCombine::Sum => sum,
                            IlTlCombine::Mean => tape.scale(sum, 0.5)?,
                        }
                    }
                    Regime::Nt | Regime::Ft => unreachable!(),
                };
                let scaled = tape.scale(contrastive, cfg.lambda)?;
                tape.add(forecast_term, scaled)?
            }
        }
    };

    let loss_value = tape.value(loss).item();
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = bound
        .param_ids()
        .iter()
        .map(|&id| {
            tape.grad(id)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; tape.value(id).numel()])
        })
        .collect();
    adam_step(params, &grads, adam, cfg.learning_rate)?;
    Ok(loss_value)
}
