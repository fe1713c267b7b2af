//! Training objectives: the weighted contrastive loss, its unweighted
//! instance-level reduction, the temporal contrastive variant, forecast
//! MAE, and the joint objective.
//!
//! For a batch of latents z and their augmented counterparts z̃, the
//! positive similarity and negative aggregate at instance i, timestep t
//! are
//!
//! ```text
//! A[i,t] = exp(z_it · z̃_it)
//! N[i,t] = Σ_j exp(z_it · z̃_jt) + Σ_{j≠i} exp(z_it · z_jt)
//! ```
//!
//! (the first sum includes j = i, so A ≤ N termwise) and the weighted
//! loss averages −w·log(A/N) over all (i, t). Ratios are evaluated in
//! log space — exp(logA − logsumexp(candidates)) — which preserves the
//! formulas while staying finite for large logits. Weights are
//! constants in the gradient graph: they are computed in input space
//! before encoding, so no gradient path exists through them.

use crate::diffcore::{Tape, Tensor, ValueId};
use crate::error::{Error, Result};

/// Largest similarity logit exp() can represent.
const MAX_LOGIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// L2-normalize latent rows before similarities. Off, the equations
    /// use raw dot products exactly as written; on (the training
    /// default), logits are bounded and cannot overflow.
    pub normalize_latents: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            normalize_latents: true,
        }
    }
}

/// Latents of a batch: per-instance original and augmented views plus
/// per-(instance, timestep) similarity weights.
#[derive(Debug, Clone)]
pub struct BatchLatents {
    /// B tensors of shape T'×D (original view).
    pub z: Vec<Tensor>,
    /// B tensors of shape T'×D (augmented view).
    pub z_tilde: Vec<Tensor>,
    /// B×T' weights in [0, 1].
    pub weights: Tensor,
}

impl BatchLatents {
    pub fn new(z: Vec<Tensor>, z_tilde: Vec<Tensor>, weights: Tensor) -> Result<Self> {
        if z.is_empty() || z.len() != z_tilde.len() {
            return Err(Error::InvalidArgument(format!(
                "batch views must be non-empty and equal-sized, got {} and {}",
                z.len(),
                z_tilde.len()
            )));
        }
        let shape = z[0].shape().to_vec();
        for t in z.iter().chain(&z_tilde) {
            if t.shape() != shape.as_slice() || t.rank() != 2 {
                return Err(Error::ShapeMismatch {
                    op: "batch_latents",
                    lhs: shape,
                    rhs: t.shape().to_vec(),
                });
            }
        }
        if weights.shape() != [z.len(), shape[0]] {
            return Err(Error::ShapeMismatch {
                op: "batch_latents_weights",
                lhs: vec![z.len(), shape[0]],
                rhs: weights.shape().to_vec(),
            });
        }
        if !weights.data().iter().all(|&w| (0.0..=1.0).contains(&w)) {
            return Err(Error::InvalidArgument(
                "similarity weights must lie in [0, 1]".into(),
            ));
        }
        Ok(BatchLatents { z, z_tilde, weights })
    }

    pub fn batch(&self) -> usize {
        self.z.len()
    }

    pub fn t_len(&self) -> usize {
        self.z[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.z[0].cols()
    }

    fn view(&self, cfg: &LossConfig) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        if !cfg.normalize_latents {
            return Ok((self.z.clone(), self.z_tilde.clone()));
        }
        let norm = |ts: &[Tensor]| -> Result<Vec<Tensor>> {
            ts.iter()
                .map(|t| {
                    let mut tape = Tape::new();
                    let id = tape.leaf(t.clone())?;
                    let n = tape.l2_normalize_rows(id)?;
                    Ok(tape.value(n).clone())
                })
                .collect()
        };
        Ok((norm(&self.z)?, norm(&self.z_tilde)?))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn check_logit(dot: f64, cfg: &LossConfig) -> Result<f64> {
    if dot > MAX_LOGIT && !cfg.normalize_latents {
        return Err(Error::SimilarityOverflow { max_dot: dot });
    }
    Ok(dot)
}

/// Positive-pair similarities `A[i,t] = exp(z_it · z̃_it)` as a B×T'
/// tensor.
pub fn positive_similarity(lat: &BatchLatents, cfg: &LossConfig) -> Result<Tensor> {
    let (z, zt) = lat.view(cfg)?;
    let (b, t_len) = (lat.batch(), lat.t_len());
    let mut data = Vec::with_capacity(b * t_len);
    for i in 0..b {
        for t in 0..t_len {
            let d = check_logit(dot(z[i].row(t), zt[i].row(t)), cfg)?;
            data.push(d.exp());
        }
    }
    Tensor::matrix(b, t_len, data)
}

/// Negative aggregates `N[i,t]` as a B×T' tensor, evaluated through
/// log-sum-exp. The first sum runs over all j including j = i, exactly
/// as the formula states, so N ≥ A termwise.
pub fn negative_aggregate(lat: &BatchLatents, cfg: &LossConfig) -> Result<Tensor> {
    let (z, zt) = lat.view(cfg)?;
    let (b, t_len) = (lat.batch(), lat.t_len());
    let mut data = Vec::with_capacity(b * t_len);
    for i in 0..b {
        for t in 0..t_len {
            let mut logits = Vec::with_capacity(2 * b - 1);
            for zt_j in &zt {
                logits.push(check_logit(dot(z[i].row(t), zt_j.row(t)), cfg)?);
            }
            for j in 0..b {
                if j != i {
                    logits.push(check_logit(dot(z[i].row(t), z[j].row(t)), cfg)?);
                }
            }
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            data.push(lse.exp());
        }
    }
    Tensor::matrix(b, t_len, data)
}

/// Raw-mode overflow guard over a similarity matrix on the tape.
fn check_logits_on_tape(tape: &Tape, id: ValueId, cfg: &LossConfig) -> Result<()> {
    if cfg.normalize_latents {
        return Ok(());
    }
    let max = tape
        .value(id)
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if max > MAX_LOGIT {
        return Err(Error::SimilarityOverflow { max_dot: max });
    }
    Ok(())
}

fn normalized_views(
    tape: &mut Tape,
    z_ids: &[ValueId],
    zt_ids: &[ValueId],
    cfg: &LossConfig,
) -> Result<(Vec<ValueId>, Vec<ValueId>)> {
    if !cfg.normalize_latents {
        return Ok((z_ids.to_vec(), zt_ids.to_vec()));
    }
    let mut z = Vec::with_capacity(z_ids.len());
    let mut zt = Vec::with_capacity(zt_ids.len());
    for &id in z_ids {
        z.push(tape.l2_normalize_rows(id)?);
    }
    for &id in zt_ids {
        zt.push(tape.l2_normalize_rows(id)?);
    }
    Ok((z, zt))
}

/// Weighted contrastive loss on the tape:
/// `(1/(B·T')) Σ_{i,t} −w[i,t] · log(A[i,t] / N[i,t])`.
///
/// Differentiable w.r.t. both latent views; `weights` enter as a
/// constant. Every per-(i,t) term is ≥ 0 because A ≤ N.
pub fn weca_loss_on_tape(
    tape: &mut Tape,
    z_ids: &[ValueId],
    zt_ids: &[ValueId],
    weights: &Tensor,
    cfg: &LossConfig,
) -> Result<ValueId> {
    let b = z_ids.len();
    if b == 0 || zt_ids.len() != b {
        return Err(Error::InvalidArgument(format!(
            "contrastive views must be non-empty and equal-sized, got {b} and {}",
            zt_ids.len()
        )));
    }
    let t_len = tape.value(z_ids[0]).rows();
    if weights.shape() != [b, t_len] {
        return Err(Error::ShapeMismatch {
            op: "weca_loss",
            lhs: vec![b, t_len],
            rhs: weights.shape().to_vec(),
        });
    }
    let (z, zt) = normalized_views(tape, z_ids, zt_ids, cfg)?;

    let mut total: Option<ValueId> = None;
    for t in 0..t_len {
        let z_t = tape.gather_rows(&z, t)?; // B×D
        let zt_t = tape.gather_rows(&zt, t)?;
        let cross = tape.matmul_nt(z_t, zt_t)?; // [i,j] = z_it·z̃_jt
        check_logits_on_tape(tape, cross, cfg)?;
        let pos = tape.dot_rows(z_t, zt_t)?; // diagonal of cross
        let candidates = if b > 1 {
            let own = tape.matmul_nt(z_t, z_t)?; // [i,j] = z_it·z_jt
            check_logits_on_tape(tape, own, cfg)?;
            let own_negatives = tape.drop_diagonal(own)?;
            tape.concat_cols(cross, own_negatives)?
        } else {
            cross
        };
        let log_n = tape.logsumexp_rows(candidates)?;
        let log_ratio = tape.sub(pos, log_n)?; // log(A/N) ≤ 0, length B
        let w_col = tape.leaf(Tensor::vector(
            (0..b).map(|i| weights.at2(i, t)).collect(),
        ))?;
        let weighted = tape.mul_elementwise(w_col, log_ratio)?;
        let s = tape.sum(weighted)?;
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    tape.scale(total.unwrap(), -1.0 / (b * t_len) as f64)
}

/// Instance-level contrastive loss: the weighted loss with w ≡ 1.
pub fn instance_loss_on_tape(
    tape: &mut Tape,
    z_ids: &[ValueId],
    zt_ids: &[ValueId],
    cfg: &LossConfig,
) -> Result<ValueId> {
    let b = z_ids.len();
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let t_len = tape.value(z_ids[0]).rows();
    let ones = Tensor::full(vec![b, t_len], 1.0);
    weca_loss_on_tape(tape, z_ids, zt_ids, &ones, cfg)
}

/// Temporal contrastive loss: InfoNCE over the time axis. For each
/// (i, t) the positive is (z_it, z̃_it) and the negatives are the same
/// instance's representations at other timesteps in both views.
pub fn temporal_loss_on_tape(
    tape: &mut Tape,
    z_ids: &[ValueId],
    zt_ids: &[ValueId],
    cfg: &LossConfig,
) -> Result<ValueId> {
    let b = z_ids.len();
    if b == 0 || zt_ids.len() != b {
        return Err(Error::InvalidArgument(format!(
            "contrastive views must be non-empty and equal-sized, got {b} and {}",
            zt_ids.len()
        )));
    }
    let t_len = tape.value(z_ids[0]).rows();
    if t_len < 2 {
        return Err(Error::InvalidArgument(
            "temporal loss needs T' ≥ 2 (no temporal negatives otherwise)".into(),
        ));
    }
    let (z, zt) = normalized_views(tape, z_ids, zt_ids, cfg)?;

    let mut total: Option<ValueId> = None;
    for i in 0..b {
        let cross = tape.matmul_nt(z[i], zt[i])?; // [t,t'] = z_it·z̃_it'
        check_logits_on_tape(tape, cross, cfg)?;
        let pos = tape.dot_rows(z[i], zt[i])?;
        let own = tape.matmul_nt(z[i], z[i])?;
        check_logits_on_tape(tape, own, cfg)?;
        let own_negatives = tape.drop_diagonal(own)?;
        let candidates = tape.concat_cols(cross, own_negatives)?;
        let log_n = tape.logsumexp_rows(candidates)?;
        let log_ratio = tape.sub(pos, log_n)?;
        let s = tape.sum(log_ratio)?;
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    tape.scale(total.unwrap(), -1.0 / (b * t_len) as f64)
}

/// Forecast MAE on the tape: `(1/H) Σ_t ‖y_t − ŷ_t‖₁`.
pub fn forecast_mae_on_tape(tape: &mut Tape, pred: ValueId, target: ValueId) -> Result<ValueId> {
    let h = tape.value(pred).rows();
    let diff = tape.sub(pred, target)?;
    let abs = tape.abs(diff)?;
    let s = tape.sum(abs)?;
    tape.scale(s, 1.0 / h as f64)
}

/// Joint objective on the tape:
/// `(1/B) Σ_i forecast_mae_i + λ · weighted contrastive loss`.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss_on_tape(
    tape: &mut Tape,
    forecasts: &[ValueId],
    targets: &[ValueId],
    z_ids: &[ValueId],
    zt_ids: &[ValueId],
    weights: &Tensor,
    lambda: f64,
    cfg: &LossConfig,
) -> Result<ValueId> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("λ must be ≥ 0, got {lambda}")));
    }
    if forecasts.is_empty() || forecasts.len() != targets.len() {
        return Err(Error::InvalidArgument(
            "joint loss needs matching forecast/target batches".into(),
        ));
    }
    let mut acc: Option<ValueId> = None;
    for (&f, &y) in forecasts.iter().zip(targets) {
        let mae = forecast_mae_on_tape(tape, f, y)?;
        acc = Some(match acc {
            None => mae,
            Some(a) => tape.add(a, mae)?,
        });
    }
    let forecast_term = tape.scale(acc.unwrap(), 1.0 / forecasts.len() as f64)?;
    let contrastive = weca_loss_on_tape(tape, z_ids, zt_ids, weights, cfg)?;
    let scaled = tape.scale(contrastive, lambda)?;
    tape.add(forecast_term, scaled)
}

// ── Value wrappers (build a throwaway tape) ──────────────────────────

fn register_views(tape: &mut Tape, lat: &BatchLatents) -> Result<(Vec<ValueId>, Vec<ValueId>)> {
    let z = lat
        .z
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let zt = lat
        .z_tilde
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((z, zt))
}

pub fn weca_loss_value(lat: &BatchLatents, cfg: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let (z, zt) = register_views(&mut tape, lat)?;
    let loss = weca_loss_on_tape(&mut tape, &z, &zt, &lat.weights, cfg)?;
    Ok(tape.value(loss).item())
}

pub fn instance_loss_value(lat: &BatchLatents, cfg: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let (z, zt) = register_views(&mut tape, lat)?;
    let loss = instance_loss_on_tape(&mut tape, &z, &zt, cfg)?;
    Ok(tape.value(loss).item())
}

pub fn temporal_loss_value(lat: &BatchLatents, cfg: &LossConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let (z, zt) = register_views(&mut tape, lat)?;
    let loss = temporal_loss_on_tape(&mut tape, &z, &zt, cfg)?;
    Ok(tape.value(loss).item())
}

pub fn forecast_mae_value(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.leaf(pred.clone())?;
    let y = tape.leaf(target.clone())?;
    let loss = forecast_mae_on_tape(&mut tape, p, y)?;
    Ok(tape.value(loss).item())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // scalar oracles stay index-style
mod tests {
    use super::*;
    use crate::rng::Rng;

    const RAW: LossConfig = LossConfig {
        normalize_latents: false,
    };

    fn random_latents(rng: &mut Rng, b: usize, t: usize, d: usize) -> BatchLatents {
        let mk = |rng: &mut Rng| {
            Tensor::matrix(t, d, (0..t * d).map(|_| rng.uniform(-1.5, 1.5)).collect()).unwrap()
        };
        let z: Vec<Tensor> = (0..b).map(|_| mk(rng)).collect();
        let zt: Vec<Tensor> = (0..b).map(|_| mk(rng)).collect();
        let w = Tensor::new(
            vec![b, t],
            (0..b * t).map(|_| rng.next_f64()).collect(),
        )
        .unwrap();
        BatchLatents::new(z, zt, w).unwrap()
    }

    // Brute-force scalar oracles, written directly from the formulas.
    fn oracle_a(lat: &BatchLatents) -> Vec<Vec<f64>> {
        let (b, t_len) = (lat.batch(), lat.t_len());
        (0..b)
            .map(|i| {
                (0..t_len)
                    .map(|t| {
                        let mut s = 0.0;
                        for d in 0..lat.dim() {
                            s += lat.z[i].at2(t, d) * lat.z_tilde[i].at2(t, d);
                        }
                        s.exp()
                    })
                    .collect()
            })
            .collect()
    }

    fn oracle_n(lat: &BatchLatents) -> Vec<Vec<f64>> {
        let (b, t_len, dim) = (lat.batch(), lat.t_len(), lat.dim());
        (0..b)
            .map(|i| {
                (0..t_len)
                    .map(|t| {
                        let mut total = 0.0;
                        for j in 0..b {
                            let mut cross = 0.0;
                            let mut own = 0.0;
                            for d in 0..dim {
                                cross += lat.z[i].at2(t, d) * lat.z_tilde[j].at2(t, d);
                                own += lat.z[i].at2(t, d) * lat.z[j].at2(t, d);
                            }
                            total += cross.exp();
                            if j != i {
                                total += own.exp();
                            }
                        }
                        total
                    })
                    .collect()
            })
            .collect()
    }

    fn oracle_weca(lat: &BatchLatents) -> f64 {
        let a = oracle_a(lat);
        let n = oracle_n(lat);
        let (b, t_len) = (lat.batch(), lat.t_len());
        let mut loss = 0.0;
        for i in 0..b {
            for t in 0..t_len {
                loss -= lat.weights.at2(i, t) * (a[i][t] / n[i][t]).ln();
            }
        }
        loss / (b * t_len) as f64
    }

    #[test]
    fn positive_similarity_of_identical_unit_rows_is_e() {
        let row = vec![1.0, 0.0, 0.0];
        let z = vec![Tensor::from_rows(&[row.clone(), row.clone()]).unwrap()];
        let lat = BatchLatents::new(z.clone(), z, Tensor::full(vec![1, 2], 1.0)).unwrap();
        let a = positive_similarity(&lat, &RAW).unwrap();
        for &v in a.data() {
            assert!((v - std::f64::consts::E).abs() < 1e-15);
        }
    }

    #[test]
    fn positive_similarity_of_orthogonal_rows_is_one() {
        let z = vec![Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap()];
        let zt = vec![Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap()];
        let lat = BatchLatents::new(z, zt, Tensor::full(vec![1, 1], 1.0)).unwrap();
        let a = positive_similarity(&lat, &RAW).unwrap();
        assert_eq!(a.data(), &[1.0]);
    }

    #[test]
    fn positive_similarity_matches_scalar_oracle() {
        let mut rng = Rng::new(50);
        let lat = random_latents(&mut rng, 2, 2, 3);
        let a = positive_similarity(&lat, &RAW).unwrap();
        let oracle = oracle_a(&lat);
        for i in 0..2 {
            for t in 0..2 {
                assert!((a.at2(i, t) - oracle[i][t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_aggregate_at_batch_one_equals_positive() {
        let mut rng = Rng::new(51);
        let lat = random_latents(&mut rng, 1, 3, 2);
        let a = positive_similarity(&lat, &RAW).unwrap();
        let n = negative_aggregate(&lat, &RAW).unwrap();
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            assert!((av - nv).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_aggregate_of_zero_latents_is_2b_minus_1() {
        let b = 4;
        let z: Vec<Tensor> = (0..b).map(|_| Tensor::zeros(vec![2, 3])).collect();
        let lat = BatchLatents::new(z.clone(), z, Tensor::full(vec![b, 2], 1.0)).unwrap();
        let n = negative_aggregate(&lat, &RAW).unwrap();
        for &v in n.data() {
            assert!((v - (2 * b - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_aggregate_matches_brute_force_double_loop() {
        let mut rng = Rng::new(52);
        for _ in 0..5 {
            let lat = random_latents(&mut rng, 3, 3, 3);
            let n = negative_aggregate(&lat, &RAW).unwrap();
            let oracle = oracle_n(&lat);
            for i in 0..3 {
                for t in 0..3 {
                    assert!((n.at2(i, t) - oracle[i][t]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn similarity_overflow_advises_normalization() {
        let z = vec![Tensor::from_rows(&[vec![30.0, 0.0]]).unwrap()];
        let lat = BatchLatents::new(z.clone(), z, Tensor::full(vec![1, 1], 1.0)).unwrap();
        match positive_similarity(&lat, &RAW).unwrap_err() {
            Error::SimilarityOverflow { max_dot } => assert!(max_dot > MAX_LOGIT),
            other => panic!("expected overflow advice, got {other}"),
        }
        // normalized mode bounds the logits, so the same latents work
        assert!(positive_similarity(&lat, &LossConfig::default()).is_ok());
    }

    #[test]
    fn weca_matches_brute_force_oracle() {
        let mut rng = Rng::new(53);
        for _ in 0..10 {
            let lat = random_latents(&mut rng, 3, 2, 3);
            let got = weca_loss_value(&lat, &RAW).unwrap();
            assert!((got - oracle_weca(&lat)).abs() < 1e-12);
        }
    }

    #[test]
    fn weca_at_batch_one_is_zero() {
        let mut rng = Rng::new(54);
        let lat = random_latents(&mut rng, 1, 4, 3);
        assert!(weca_loss_value(&lat, &RAW).unwrap().abs() < 1e-15);
        assert!(instance_loss_value(&lat, &RAW).unwrap().abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_loss_and_zero_latent_gradients() {
        let mut rng = Rng::new(55);
        let mut lat = random_latents(&mut rng, 3, 2, 2);
        lat.weights = Tensor::zeros(vec![3, 2]);
        let mut tape = Tape::new();
        let (z, zt) = register_views(&mut tape, &lat).unwrap();
        let loss = weca_loss_on_tape(&mut tape, &z, &zt, &lat.weights, &RAW).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
        tape.backward(loss).unwrap();
        for id in z.iter().chain(&zt) {
            assert!(tape.grad(*id).unwrap().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn unit_weights_reduce_weca_to_instance_loss() {
        let mut rng = Rng::new(56);
        for _ in 0..20 {
            let mut lat = random_latents(&mut rng, 4, 3, 3);
            lat.weights = Tensor::full(vec![4, 3], 1.0);
            let weca = weca_loss_value(&lat, &RAW).unwrap();
            let il = instance_loss_value(&lat, &RAW).unwrap();
            assert!((weca - il).abs() <= 1e-12);
            // and in normalized mode as well
            let cfg = LossConfig::default();
            let weca_n = weca_loss_value(&lat, &cfg).unwrap();
            let il_n = instance_loss_value(&lat, &cfg).unwrap();
            assert!((weca_n - il_n).abs() <= 1e-12);
        }
    }

    #[test]
    fn every_term_is_nonnegative_because_a_is_bounded_by_n() {
        let mut rng = Rng::new(57);
        for _ in 0..10 {
            let lat = random_latents(&mut rng, 3, 3, 2);
            let a = positive_similarity(&lat, &RAW).unwrap();
            let n = negative_aggregate(&lat, &RAW).unwrap();
            for (&av, &nv) in a.data().iter().zip(n.data()) {
                assert!(av <= nv + 1e-12);
            }
            assert!(weca_loss_value(&lat, &RAW).unwrap() >= 0.0);
            assert!(instance_loss_value(&lat, &RAW).unwrap() >= 0.0);
            assert!(temporal_loss_value(&lat, &RAW).unwrap() >= 0.0);
        }
    }

    #[test]
    fn raising_one_weight_never_lowers_the_loss() {
        let mut rng = Rng::new(58);
        for _ in 0..5 {
            let lat = random_latents(&mut rng, 3, 2, 2);
            let base = weca_loss_value(&lat, &RAW).unwrap();
            let mut bumped = lat.clone();
            let idx = rng.below(6);
            let w = bumped.weights.data()[idx];
            bumped.weights.data_mut()[idx] = (w + 0.3).min(1.0);
            assert!(weca_loss_value(&bumped, &RAW).unwrap() >= base - 1e-15);
        }
    }

    #[test]
    fn batch_permutation_leaves_losses_unchanged() {
        let mut rng = Rng::new(59);
        let lat = random_latents(&mut rng, 4, 3, 3);
        let perm = [2usize, 0, 3, 1];
        let permuted = BatchLatents::new(
            perm.iter().map(|&i| lat.z[i].clone()).collect(),
            perm.iter().map(|&i| lat.z_tilde[i].clone()).collect(),
            Tensor::from_rows(
                &perm
                    .iter()
                    .map(|&i| lat.weights.row(i).to_vec())
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
        )
        .unwrap();
        for (a, b) in [
            (weca_loss_value(&lat, &RAW), weca_loss_value(&permuted, &RAW)),
            (
                instance_loss_value(&lat, &RAW),
                instance_loss_value(&permuted, &RAW),
            ),
            (
                temporal_loss_value(&lat, &RAW),
                temporal_loss_value(&permuted, &RAW),
            ),
        ] {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_loss_matches_hand_computed_two_timestep_case() {
        // B=1, T'=2, D=2: denominators enumerate by hand.
        let z = Tensor::from_rows(&[vec![0.4, -0.2], vec![0.1, 0.3]]).unwrap();
        let zt = Tensor::from_rows(&[vec![0.2, 0.5], vec![-0.3, 0.1]]).unwrap();
        let dot = |a: &[f64], b: &[f64]| a[0] * b[0] + a[1] * b[1];
        let mut expect = 0.0;
        for t in 0..2 {
            let pos = dot(z.row(t), zt.row(t));
            let mut denom = 0.0;
            for tp in 0..2 {
                denom += dot(z.row(t), zt.row(tp)).exp();
                if tp != t {
                    denom += dot(z.row(t), z.row(tp)).exp();
                }
            }
            expect -= pos - denom.ln();
        }
        expect /= 2.0;
        let lat = BatchLatents::new(vec![z], vec![zt], Tensor::full(vec![1, 2], 1.0)).unwrap();
        let got = temporal_loss_value(&lat, &RAW).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn temporal_loss_requires_two_timesteps() {
        let mut rng = Rng::new(60);
        let lat = random_latents(&mut rng, 2, 1, 3);
        assert!(temporal_loss_value(&lat, &RAW).is_err());
    }

    #[test]
    fn forecast_mae_basics() {
        let y = Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        assert_eq!(forecast_mae_value(&y, &y).unwrap(), 0.0);
        let zero = Tensor::zeros(vec![1, 1]);
        let three = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        assert_eq!(forecast_mae_value(&three, &zero).unwrap(), 3.0);
        // H=2, C=2 random case against the scalar formula
        let mut rng = Rng::new(61);
        let p = Tensor::matrix(2, 2, (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap();
        let t = Tensor::matrix(2, 2, (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap();
        let expect: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        assert!((forecast_mae_value(&p, &t).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_degenerates_and_is_linear_in_lambda() {
        let mut rng = Rng::new(62);
        let lat = random_latents(&mut rng, 2, 2, 2);
        let mk = |rng: &mut Rng| {
            Tensor::matrix(3, 1, (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
        };
        let preds: Vec<Tensor> = (0..2).map(|_| mk(&mut rng)).collect();
        let targets: Vec<Tensor> = (0..2).map(|_| mk(&mut rng)).collect();

        let joint = |lambda: f64, preds: &[Tensor], targets: &[Tensor]| {
            let mut tape = Tape::new();
            let (z, zt) = register_views(&mut tape, &lat).unwrap();
            let f: Vec<ValueId> = preds.iter().map(|p| tape.leaf(p.clone()).unwrap()).collect();
            let y: Vec<ValueId> = targets.iter().map(|t| tape.leaf(t.clone()).unwrap()).collect();
            let loss =
                joint_loss_on_tape(&mut tape, &f, &y, &z, &zt, &lat.weights, lambda, &RAW).unwrap();
            tape.value(loss).item()
        };

        // λ = 0 → mean forecast MAE
        let mean_mae = preds
            .iter()
            .zip(&targets)
            .map(|(p, t)| forecast_mae_value(p, t).unwrap())
            .sum::<f64>()
            / 2.0;
        assert!((joint(0.0, &preds, &targets) - mean_mae).abs() < 1e-12);

        // zero forecast error at λ = 1 → the contrastive term alone
        let weca = weca_loss_value(&lat, &RAW).unwrap();
        assert!((joint(1.0, &targets, &targets) - weca).abs() < 1e-12);

        // linearity: joint(λ=2) − joint(λ=1) = weca
        let diff = joint(2.0, &preds, &targets) - joint(1.0, &preds, &targets);
        assert!((diff - weca).abs() < 1e-12);

        // negative λ rejected
        let mut tape = Tape::new();
        let (z, zt) = register_views(&mut tape, &lat).unwrap();
        let f: Vec<ValueId> = preds.iter().map(|p| tape.leaf(p.clone()).unwrap()).collect();
        let y: Vec<ValueId> = targets.iter().map(|t| tape.leaf(t.clone()).unwrap()).collect();
        assert!(
            joint_loss_on_tape(&mut tape, &f, &y, &z, &zt, &lat.weights, -1.0, &RAW).is_err()
        );
    }

    #[test]
    fn instance_loss_descends_under_gradient_steps() {
        // 50 plain gradient steps on a fixed batch must trend downward.
        let mut rng = Rng::new(63);
        let b = 3;
        let (t_len, d) = (3, 2);
        let mut z: Vec<Tensor> = (0..b)
            .map(|_| {
                Tensor::matrix(t_len, d, (0..t_len * d).map(|_| rng.uniform(-1.0, 1.0)).collect())
                    .unwrap()
            })
            .collect();
        let mut zt = z.clone();
        for t in zt.iter_mut() {
            for v in t.data_mut() {
                *v += rng.uniform(-0.3, 0.3);
            }
        }
        let lr = 0.1;
        let mut losses = Vec::new();
        for _ in 0..50 {
            let mut tape = Tape::new();
            let z_ids: Vec<ValueId> = z.iter().map(|t| tape.leaf(t.clone()).unwrap()).collect();
            let zt_ids: Vec<ValueId> = zt.iter().map(|t| tape.leaf(t.clone()).unwrap()).collect();
            let loss = instance_loss_on_tape(&mut tape, &z_ids, &zt_ids, &RAW).unwrap();
            losses.push(tape.value(loss).item());
            tape.backward(loss).unwrap();
            for (tensor, &id) in z.iter_mut().chain(zt.iter_mut()).zip(z_ids.iter().chain(&zt_ids))
            {
                let g = tape.grad(id).unwrap();
                for (v, &gv) in tensor.data_mut().iter_mut().zip(g) {
                    *v -= lr * gv;
                }
            }
        }
        assert!(
            losses.last().unwrap() < losses.first().unwrap(),
            "no descent: {losses:?}"
        );
    }
}
