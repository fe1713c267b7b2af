//! Parametric anomaly curve, parameter sampling, and tail injection.
//!
//! An anomaly is a transient demand shift shaped like `A·n·e^{−B·n^C}`
//! scaled by a fixed normalizer, rising from zero at onset and decaying
//! back. It is added to the tail of an input window and propagated into
//! the forecast horizon, so a model observes the onset and must adjust
//! its trajectory. Injection operates in normalized (z-scored) space;
//! `scale` tunes severity relative to one train-std unit.

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fixed normalizer of the anomaly curve, part of the formula verbatim.
pub const CURVE_NORMALIZER: f64 = 90_409.0;

/// Distributions and scaling for anomaly generation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyConfig {
    pub amplitude_mean: f64,
    pub amplitude_std: f64,
    /// Truncation floor for the amplitude draw.
    pub amplitude_min: f64,
    pub decay: f64,
    pub shape_mean: f64,
    pub shape_std: f64,
    /// Truncation floor for the shape draw; keeps `n^C` well-defined.
    pub shape_min: f64,
    /// Severity multiplier applied in normalized space.
    pub scale: f64,
    /// Bandwidth of the Gaussian similarity-weight kernel.
    pub sigma_w: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            amplitude_mean: 74_120.0,
            amplitude_std: 20_000.0,
            amplitude_min: 1_000.0,
            decay: 0.39,
            shape_mean: 0.806,
            shape_std: 0.3,
            shape_min: 0.1,
            scale: 1.0,
            sigma_w: 1.0,
        }
    }
}

/// The (A, B, C) triple plus sign and onset controlling one anomaly.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyParams {
    /// Amplitude A, in raw units of the fitted event.
    pub amplitude: f64,
    /// Decay rate B.
    pub decay: f64,
    /// Shape exponent C.
    pub shape: f64,
    /// +1.0 for a demand spike, −1.0 for a dropout.
    pub sign: f64,
    /// Injection point inside the input window.
    pub onset: usize,
}

impl AnomalyParams {
    pub fn new(amplitude: f64, decay: f64, shape: f64, sign: f64, onset: usize) -> Result<Self> {
        if !(amplitude.is_finite() && decay.is_finite() && shape.is_finite()) {
            return Err(Error::InvalidArgument(
                "anomaly parameters must be finite".into(),
            ));
        }
        if decay <= 0.0 || shape <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "anomaly decay and shape must be positive, got B={decay}, C={shape}"
            )));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::InvalidArgument(format!(
                "anomaly sign must be +1 or -1, got {sign}"
            )));
        }
        Ok(AnomalyParams {
            amplitude,
            decay,
            shape,
            sign,
            onset,
        })
    }

    /// Curve value `A·n·e^{−B·n^C} / 90409` at day index n ≥ 0.
    ///
    /// Zero at onset (n = 0) and decaying to zero for large n.
    pub fn curve(&self, n: f64) -> f64 {
        assert!(n >= 0.0, "curve day index must be ≥ 0");
        self.amplitude * n * (-self.decay * n.powf(self.shape)).exp() / CURVE_NORMALIZER
    }

    /// Stationary point of `n·e^{−B·n^C}`: the real-valued day where the
    /// curve peaks, `(1/(B·C))^{1/C}`.
    pub fn peak_day(&self) -> f64 {
        (1.0 / (self.decay * self.shape)).powf(1.0 / self.shape)
    }
}

/// Draw anomaly parameters for a window of length `window_len`.
///
/// Amplitude and shape come from normal draws floored at their
/// truncation bounds (flooring keeps the sample means on the stated
/// distribution means, which rejection sampling would shift), decay is
/// fixed, sign is uniform on {+1, −1}, and the onset lands uniformly in
/// the last quarter of the window so the rising edge is observed while
/// most of the anomaly mass falls in the horizon.
pub fn sample_params(rng: &mut Rng, cfg: &AnomalyConfig, window_len: usize) -> AnomalyParams {
    let amplitude = rng.normal(cfg.amplitude_mean, cfg.amplitude_std).max(cfg.amplitude_min);
    let shape = rng.normal(cfg.shape_mean, cfg.shape_std).max(cfg.shape_min);
    let sign = rng.sign();
    let quarter = (window_len / 4).max(1);
    let onset = window_len - quarter + rng.below(quarter);
    AnomalyParams {
        amplitude,
        decay: cfg.decay,
        shape,
        sign,
        onset,
    }
}

/// An original window/horizon pair, its augmented counterpart, and the
/// per-timestep similarity weights.
#[derive(Debug, Clone)]
pub struct AugmentedPair {
    pub original_input: Tensor,
    pub original_target: Tensor,
    pub augmented_input: Tensor,
    pub augmented_target: Tensor,
    /// w^(i,t) ∈ [0,1], one per input timestep.
    pub weights: Vec<f64>,
    pub params: AnomalyParams,
    pub injection_start: usize,
}

/// Add the anomaly curve to the tail of `input` (timesteps ≥
/// `injection_start`) and propagate it through every horizon step.
///
/// The curve's day index continues seamlessly across the input/horizon
/// boundary: input timestep t carries `a(t − injection_start)`, horizon
/// step h carries `a(T − injection_start + h)`.
pub fn inject(
    input: &Tensor,
    target: &Tensor,
    params: &AnomalyParams,
    injection_start: usize,
    cfg: &AnomalyConfig,
) -> Result<AugmentedPair> {
    if input.rank() != 2 || target.rank() != 2 || input.cols() != target.cols() {
        return Err(Error::ShapeMismatch {
            op: "inject",
            lhs: input.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let t_len = input.rows();
    if injection_start >= t_len {
        return Err(Error::InvalidArgument(format!(
            "injection_start {injection_start} out of range for window length {t_len}"
        )));
    }
    let channels = input.cols();
    let mut aug_input = input.clone();
    for t in injection_start..t_len {
        let delta = params.sign * cfg.scale * params.curve((t - injection_start) as f64);
        for c in 0..channels {
            aug_input.data_mut()[t * channels + c] += delta;
        }
    }
    let mut aug_target = target.clone();
    for h in 0..target.rows() {
        let day = (t_len - injection_start + h) as f64;
        let delta = params.sign * cfg.scale * params.curve(day);
        for c in 0..channels {
            aug_target.data_mut()[h * channels + c] += delta;
        }
    }
    let weights = compute_weights(input, &aug_input, cfg.sigma_w)?;
    Ok(AugmentedPair {
        original_input: input.clone(),
        original_target: target.clone(),
        augmented_input: aug_input,
        augmented_target: aug_target,
        weights,
        params: params.clone(),
        injection_start,
    })
}

/// Identity augmentation: the pair is its own counterpart and every
/// weight is exactly 1. Used for windows that receive no anomaly.
pub fn identity_pair(input: &Tensor, target: &Tensor) -> AugmentedPair {
    AugmentedPair {
        original_input: input.clone(),
        original_target: target.clone(),
        augmented_input: input.clone(),
        augmented_target: target.clone(),
        weights: vec![1.0; input.rows()],
        params: AnomalyParams {
            amplitude: 0.0,
            decay: 1.0,
            shape: 1.0,
            sign: 1.0,
            onset: 0,
        },
        injection_start: 0,
    }
}

/// Per-timestep similarity weights from input-space Euclidean distance:
/// `w_t = exp(−d_t² / (2σ_w²))` where d_t is the channel-wise distance
/// between original and augmented at timestep t. Unmodified timesteps
/// get exactly 1.
pub fn compute_weights(original: &Tensor, augmented: &Tensor, sigma_w: f64) -> Result<Vec<f64>> {
    if original.shape() != augmented.shape() || original.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "compute_weights",
            lhs: original.shape().to_vec(),
            rhs: augmented.shape().to_vec(),
        });
    }
    let denom = 2.0 * sigma_w * sigma_w;
    Ok((0..original.rows())
        .map(|t| {
            let d2: f64 = original
                .row(t)
                .iter()
                .zip(augmented.row(t))
                .map(|(&o, &a)| (o - a) * (o - a))
                .sum();
            (-d2 / denom).exp()
        })
        .collect())
}
