//! Acceptance suite: the exit criteria of the artifact, one test per
//! criterion, each printing a PASS line with the measured margin.
//!
//! Tolerances and thresholds are pinned here, in code. Criterion 6 is
//! the full desk-scale directional benchmark (64 series × 730 days,
//! T=56, H=14, 5 seeds) and takes a few minutes; everything else is
//! seconds.

use std::time::Instant;
use weca_core::anomaly::{self, AnomalyConfig, AnomalyParams};
use weca_core::bench;
use weca_core::config::ExperimentConfig;
use weca_core::datagen::{generate_synthetic, split, NormStats, SplitSpec, SynthConfig};
use weca_core::eval::smape;
use weca_core::gradcheck::{finite_diff_grad, max_rel_err, FD_STEP};
use weca_core::losses::{
    forecast_mae_on_tape, instance_loss_on_tape, instance_loss_value, joint_loss_on_tape,
    negative_aggregate, positive_similarity, temporal_loss_on_tape, weca_loss_on_tape,
    weca_loss_value, BatchLatents, LossConfig,
};
use weca_core::model::{init_params, BoundModel, DecoderConfig, EncoderConfig};
use weca_core::rng::Rng;
use weca_core::trainer::{self, Regime, TrainConfig, TrainData};
use weca_core::{Tape, Tensor, ValueId};

const RAW: LossConfig = LossConfig {
    normalize_latents: false,
};

fn random_latents(rng: &mut Rng, b: usize, t: usize, d: usize) -> BatchLatents {
    let mk = |rng: &mut Rng| {
        Tensor::matrix(t, d, (0..t * d).map(|_| rng.uniform(-1.5, 1.5)).collect()).unwrap()
    };
    let z: Vec<Tensor> = (0..b).map(|_| mk(rng)).collect();
    let zt: Vec<Tensor> = (0..b).map(|_| mk(rng)).collect();
    let weights = Tensor::new(vec![b, t], (0..b * t).map(|_| rng.next_f64()).collect()).unwrap();
    BatchLatents::new(z, zt, weights).unwrap()
}

/// Criterion 1 — reduction identity: with unit weights the weighted
/// contrastive loss equals the instance-level loss to 1e-12, over 100
/// random batches, in under a second.
#[test]
fn criterion_1_reduction_identity() {
    let started = Instant::now();
    let mut rng = Rng::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b = 1 + rng.below(4);
        let t = 1 + rng.below(6);
        let d = 1 + rng.below(4);
        let mut lat = random_latents(&mut rng, b, t, d);
        lat.weights = Tensor::full(vec![b, t], 1.0);
        let weca = weca_loss_value(&lat, &RAW).unwrap();
        let il = instance_loss_value(&lat, &RAW).unwrap();
        worst = worst.max((weca - il).abs());
    }
    assert!(worst <= 1e-12, "reduction identity off by {worst:e}");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("ACCEPTANCE 1 (reduction identity): PASS (max |diff| = {worst:.2e}, {elapsed:?})");
}

type LossBuilder = dyn Fn(&mut Tape, &[ValueId], &[ValueId]) -> ValueId;

fn check_loss_gradients(name: &str, rng: &mut Rng, instances: usize, build: &LossBuilder) -> f64 {
    let (b, t_len, d) = (3usize, 3usize, 2usize);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let z: Vec<f64> = (0..b * t_len * d).map(|_| rng.uniform(-1.5, 1.5)).collect();
        let zt: Vec<f64> = (0..b * t_len * d).map(|_| rng.uniform(-1.5, 1.5)).collect();
        let eval = |zf: &[f64], ztf: &[f64]| {
            let mut tape = Tape::new();
            let mk = |tape: &mut Tape, flat: &[f64]| -> Vec<ValueId> {
                (0..b)
                    .map(|i| {
                        let block = flat[i * t_len * d..(i + 1) * t_len * d].to_vec();
                        tape.leaf(Tensor::matrix(t_len, d, block).unwrap()).unwrap()
                    })
                    .collect()
            };
            let z_ids = mk(&mut tape, zf);
            let zt_ids = mk(&mut tape, ztf);
            let loss = build(&mut tape, &z_ids, &zt_ids);
            (tape, z_ids, zt_ids, loss)
        };
        let (mut tape, z_ids, zt_ids, loss) = eval(&z, &zt);
        tape.backward(loss).unwrap();
        let collect = |tape: &Tape, ids: &[ValueId]| -> Vec<f64> {
            ids.iter()
                .flat_map(|&id| {
                    tape.grad(id)
                        .map(|g| g.to_vec())
                        .unwrap_or_else(|| vec![0.0; tape.value(id).numel()])
                })
                .collect()
        };
        let analytic: Vec<f64> = [collect(&tape, &z_ids), collect(&tape, &zt_ids)].concat();
        let numeric_z = finite_diff_grad(
            |probe| {
                let (t, _, _, l) = eval(probe, &zt);
                t.value(l).item()
            },
            &z,
            FD_STEP,
        );
        let numeric_zt = finite_diff_grad(
            |probe| {
                let (t, _, _, l) = eval(&z, probe);
                t.value(l).item()
            },
            &zt,
            FD_STEP,
        );
        let numeric: Vec<f64> = [numeric_z, numeric_zt].concat();
        let err = max_rel_err(&analytic, &numeric);
        assert!(err <= 1e-4, "{name}: gradient off by {err:.3e}");
        worst = worst.max(err);
    }
    worst
}

/// Criterion 2 — gradient oracle: every loss and the end-to-end tiny
/// model match central finite differences (relative error ≤ 1e-4,
/// ≥ 20 random instances each, under 30 s).
#[test]
fn criterion_2_gradient_oracle() {
    let started = Instant::now();
    let mut rng = Rng::new(202);
    let mut worst: f64 = 0.0;

    let mut w_rng = Rng::new(203);
    let weights = Tensor::new(vec![3, 3], (0..9).map(|_| w_rng.next_f64()).collect()).unwrap();
    let wts = weights.clone();
    worst = worst.max(check_loss_gradients("WECA", &mut rng, 20, &move |tape, z, zt| {
        weca_loss_on_tape(tape, z, zt, &wts, &RAW).unwrap()
    }));
    worst = worst.max(check_loss_gradients("IL", &mut rng, 20, &|tape, z, zt| {
        instance_loss_on_tape(tape, z, zt, &RAW).unwrap()
    }));
    worst = worst.max(check_loss_gradients("TL", &mut rng, 20, &|tape, z, zt| {
        temporal_loss_on_tape(tape, z, zt, &RAW).unwrap()
    }));
    let wts = weights.clone();
    worst = worst.max(check_loss_gradients("joint", &mut rng, 20, &move |tape, z, zt| {
        let preds: Vec<ValueId> = (0..3)
            .map(|i| {
                let t = Tensor::matrix(2, 1, vec![0.3 * i as f64, -0.2]).unwrap();
                tape.leaf(t).unwrap()
            })
            .collect();
        let targets: Vec<ValueId> = (0..3)
            .map(|i| {
                let t = Tensor::matrix(2, 1, vec![0.1, 0.4 * i as f64]).unwrap();
                tape.leaf(t).unwrap()
            })
            .collect();
        joint_loss_on_tape(tape, &preds, &targets, z, zt, &wts, 1.0, &RAW).unwrap()
    }));

    // MAE, probed on predictions and targets directly
    for _ in 0..20 {
        let p: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let y: Vec<f64> = (0..6).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let eval = |pf: &[f64], yf: &[f64]| {
            let mut tape = Tape::new();
            let pid = tape.leaf(Tensor::matrix(3, 2, pf.to_vec()).unwrap()).unwrap();
            let yid = tape.leaf(Tensor::matrix(3, 2, yf.to_vec()).unwrap()).unwrap();
            let loss = forecast_mae_on_tape(&mut tape, pid, yid).unwrap();
            (tape, pid, loss)
        };
        let (mut tape, pid, loss) = eval(&p, &y);
        tape.backward(loss).unwrap();
        let analytic = tape.grad(pid).unwrap().to_vec();
        let numeric = finite_diff_grad(
            |probe| {
                let (t, _, l) = eval(probe, &y);
                t.value(l).item()
            },
            &p,
            FD_STEP,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err <= 1e-4, "MAE gradient off by {err:.3e}");
        worst = worst.max(err);
    }

    // End-to-end tiny model: T=8, D=4, H=2, two conv layers. The joint
    // objective is differentiated w.r.t. every parameter tensor.
    let enc = EncoderConfig {
        input_channels: 1,
        latent_dim: 4,
        kernel_size: 3,
        dilations: vec![1, 2],
    };
    let dec = DecoderConfig {
        horizon: 2,
        output_channels: 1,
    };
    for instance in 0..20u64 {
        let params = init_params(&enc, &dec, 300 + instance).unwrap();
        let mut drng = Rng::new(400 + instance);
        let x: Vec<f64> = (0..8).map(|_| drng.uniform(-1.5, 1.5)).collect();
        let x_aug: Vec<f64> = x.iter().map(|v| v + drng.uniform(-0.4, 0.4)).collect();
        let y: Vec<f64> = (0..2).map(|_| drng.uniform(-1.5, 1.5)).collect();

        let flat: Vec<f64> = params
            .named_tensors()
            .iter()
            .flat_map(|(_, t)| t.data().to_vec())
            .collect();
        let rebuild = |flat: &[f64]| {
            let mut p = params.clone();
            let mut offset = 0;
            for t in p.tensors_mut() {
                let n = t.numel();
                t.data_mut().copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
            p
        };
        let eval = |flat: &[f64]| -> (Tape, Vec<ValueId>, ValueId) {
            let p = rebuild(flat);
            let mut tape = Tape::new();
            let bound = BoundModel::bind(&mut tape, &p).unwrap();
            let xid = tape.leaf(Tensor::matrix(8, 1, x.clone()).unwrap()).unwrap();
            let xaid = tape.leaf(Tensor::matrix(8, 1, x_aug.clone()).unwrap()).unwrap();
            let z = bound.encode(&mut tape, xid).unwrap();
            let zt = bound.encode(&mut tape, xaid).unwrap();
            let pred = bound.decode(&mut tape, z).unwrap();
            let yid = tape.leaf(Tensor::matrix(2, 1, y.clone()).unwrap()).unwrap();
            let weights = Tensor::full(vec![1, 8], 0.7);
            let loss = joint_loss_on_tape(
                &mut tape,
                &[pred],
                &[yid],
                &[z],
                &[zt],
                &weights,
                1.0,
                &LossConfig::default(),
            )
            .unwrap();
            (tape, bound.param_ids(), loss)
        };
        let (mut tape, param_ids, loss) = eval(&flat);
        tape.backward(loss).unwrap();
        let analytic: Vec<f64> = param_ids
            .iter()
            .flat_map(|&id| {
                tape.grad(id)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; tape.value(id).numel()])
            })
            .collect();
        let numeric = finite_diff_grad(
            |probe| {
                let (t, _, l) = eval(probe);
                t.value(l).item()
            },
            &flat,
            FD_STEP,
        );
        let err = max_rel_err(&analytic, &numeric);
        assert!(err <= 1e-4, "end-to-end gradient off by {err:.3e}");
        worst = worst.max(err);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!("ACCEPTANCE 2 (gradient oracle): PASS (max rel err = {worst:.2e}, {elapsed:?})");
}

/// Criterion 3 — similarity formulas: the vectorized positive and
/// negative aggregates match scalar double/triple loops to 1e-12.
#[test]
fn criterion_3_similarity_brute_force() {
    let mut rng = Rng::new(303);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let lat = random_latents(&mut rng, 3, 3, 3);
        let a = positive_similarity(&lat, &RAW).unwrap();
        let n = negative_aggregate(&lat, &RAW).unwrap();
        for i in 0..3 {
            for t in 0..3 {
                let mut pos = 0.0;
                for dd in 0..3 {
                    pos += lat.z[i].at2(t, dd) * lat.z_tilde[i].at2(t, dd);
                }
                worst = worst.max((a.at2(i, t) - pos.exp()).abs());
                let mut agg = 0.0;
                for j in 0..3 {
                    let mut cross = 0.0;
                    let mut own = 0.0;
                    for dd in 0..3 {
                        cross += lat.z[i].at2(t, dd) * lat.z_tilde[j].at2(t, dd);
                        own += lat.z[i].at2(t, dd) * lat.z[j].at2(t, dd);
                    }
                    agg += cross.exp();
                    if j != i {
                        agg += own.exp();
                    }
                }
                worst = worst.max((n.at2(i, t) - agg).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "similarity mismatch {worst:e}");
    println!("ACCEPTANCE 3 (similarity brute force): PASS (max |diff| = {worst:.2e})");
}

/// Criterion 4 — anomaly machinery: the curve vanishes at onset, its
/// grid argmax matches the closed-form stationary point for 50 sampled
/// shapes, and Monte-Carlo parameter means hit the stated moments
/// within 3 standard errors at 10⁴ draws.
#[test]
fn criterion_4_anomaly_curve_and_sampling() {
    let cfg = AnomalyConfig::default();
    let mut rng = Rng::new(404);

    // a(0) = 0 exactly, across sampled parameters
    for _ in 0..100 {
        let p = anomaly::sample_params(&mut rng, &cfg, 56);
        assert_eq!(p.curve(0.0), 0.0);
    }

    // 50 sampled shapes whose stationary point lies inside the grid:
    // brute-force argmax over n ∈ {0..60} against the closed form
    // (1/(B·C))^{1/C}. The exact discretization of the stationary point
    // is the better of its two neighboring integers (the curve is
    // asymmetric, so plain round() can be off by one when the peak sits
    // near a half-integer); round() itself is asserted on draws away
    // from that boundary.
    let mut checked = 0;
    let mut draws = 0;
    while checked < 50 {
        draws += 1;
        assert!(draws < 1000, "could not find 50 in-grid stationary points");
        let p = anomaly::sample_params(&mut rng, &cfg, 56);
        let peak = p.peak_day();
        if !(0.0..=60.0).contains(&peak.round()) {
            // peak beyond the grid: the curve must still be rising there
            assert!(p.curve(60.0) > p.curve(59.0));
            continue;
        }
        let grid_argmax = (0..=60)
            .max_by(|&a, &b| p.curve(a as f64).total_cmp(&p.curve(b as f64)))
            .unwrap() as f64;
        let lo = peak.floor();
        let discrete = if p.curve(lo) >= p.curve(lo + 1.0) { lo } else { lo + 1.0 };
        assert_eq!(
            grid_argmax, discrete,
            "grid argmax {grid_argmax} vs discretized stationary point {discrete} for {p:?}"
        );
        if (peak.fract() - 0.5).abs() > 0.05 {
            assert_eq!(
                grid_argmax,
                peak.round(),
                "grid argmax {grid_argmax} vs round({peak}) for {p:?}"
            );
            checked += 1;
        }
    }

    // Monte-Carlo means at 10⁴ draws
    let mut mc = Rng::new(4242);
    let n = 10_000;
    let samples: Vec<AnomalyParams> = (0..n).map(|_| anomaly::sample_params(&mut mc, &cfg, 56)).collect();
    let mean_a = samples.iter().map(|p| p.amplitude).sum::<f64>() / n as f64;
    let mean_c = samples.iter().map(|p| p.shape).sum::<f64>() / n as f64;
    let se_a = cfg.amplitude_std / (n as f64).sqrt();
    let se_c = cfg.shape_std / (n as f64).sqrt();
    let za = (mean_a - cfg.amplitude_mean).abs() / se_a;
    let zc = (mean_c - cfg.shape_mean).abs() / se_c;
    assert!(za <= 3.0, "amplitude mean {mean_a} is {za:.2} SE from {}", cfg.amplitude_mean);
    assert!(zc <= 3.0, "shape mean {mean_c} is {zc:.2} SE from {}", cfg.shape_mean);
    println!(
        "ACCEPTANCE 4 (anomaly curve & sampling): PASS (50 argmax matches; \
         amplitude {za:.2} SE, shape {zc:.2} SE)"
    );
}

fn degenerate_data(seed: u64) -> TrainData {
    let set = generate_synthetic(&SynthConfig {
        n_series: 6,
        length: 240,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let (train, val, _test) = split(&set, &SplitSpec::default(), 20).unwrap();
    let stats = NormStats::from_train(&train).unwrap();
    TrainData {
        train: stats.normalize(&train).unwrap(),
        val: stats.normalize(&val).unwrap(),
        window_len: 16,
        horizon: 4,
    }
}

/// Criterion 5 — degenerate objective: with λ = 0 (and the forecast
/// term restricted to the original view, the literal joint objective),
/// WECA training reproduces NT's per-epoch loss sequence bit for bit.
#[test]
fn criterion_5_degenerate_objective() {
    let (enc, dec) = (
        EncoderConfig {
            input_channels: 1,
            latent_dim: 8,
            kernel_size: 3,
            dilations: vec![1, 2],
        },
        DecoderConfig {
            horizon: 4,
            output_channels: 1,
        },
    );
    let data = degenerate_data(55);
    let base = TrainConfig {
        batch_size: 16,
        max_epochs: 4,
        early_stop_patience: 4,
        seed: 77,
        ..TrainConfig::default()
    };
    let nt = trainer::train(
        Regime::Nt,
        &data,
        &enc,
        &dec,
        &base,
        &AnomalyConfig::default(),
        None,
    )
    .unwrap();
    let weca = trainer::train(
        Regime::Weca,
        &data,
        &enc,
        &dec,
        &TrainConfig {
            lambda: 0.0,
            forecast_on_augmented: false,
            ..base
        },
        &AnomalyConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(nt.log.epochs.len(), weca.log.epochs.len());
    for (a, b) in nt.log.epochs.iter().zip(&weca.log.epochs) {
        assert_eq!(
            a.train_loss.to_bits(),
            b.train_loss.to_bits(),
            "epoch {} diverged: {} vs {}",
            a.epoch,
            a.train_loss,
            b.train_loss
        );
    }
    assert_eq!(nt.params, weca.params);
    println!(
        "ACCEPTANCE 5 (degenerate objective): PASS ({} epochs bit-identical)",
        nt.log.epochs.len()
    );
}

/// The pinned desk-scale benchmark config: 64 series × 730 days, T=56,
/// H=14, batch 32, 5 seeds.
fn benchmark_config() -> ExperimentConfig {
    ExperimentConfig::parse(
        "data.n_series = 64\n\
         data.length = 730\n\
         data.seed = 1\n\
         window.input_len = 56\n\
         window.horizon = 14\n\
         model.latent_dim = 16\n\
         model.dilations = 1,2,4\n\
         train.batch_size = 32\n\
         train.max_epochs = 8\n\
         train.patience = 8\n\
         train.max_batches_per_epoch = 180\n\
         bench.seeds = 0,1,2,3,4\n",
    )
    .unwrap()
}

/// Criterion 6 — directional reproduction of the regime comparison on
/// the synthetic benchmark, means over 5 seeds:
/// (a) WECA improves anomaly-affected SMAPE over NT by ≥ 2 points,
/// (b) WECA's normal-data SMAPE stays within 1 point of NT,
/// (c) FT degrades normal-data SMAPE (catastrophic forgetting),
/// (d) CL-IL's anomaly-affected improvement is ≥ 0.
#[test]
fn criterion_6_directional_benchmark() {
    let started = Instant::now();
    let config = benchmark_config();
    let dir = std::env::temp_dir().join("weca_acceptance_bench");
    let _ = std::fs::remove_dir_all(&dir);
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let regimes = [Regime::Nt, Regime::Ft, Regime::ClIl, Regime::Weca];
    let outcome = bench::run_benchmark(&config, &regimes, &dir, jobs).unwrap();
    assert!(outcome.failures.is_empty(), "failed runs: {:?}", outcome.failures);
    print!("{}", outcome.aggregate.to_table());

    let row = |r: Regime| {
        outcome
            .aggregate
            .rows
            .iter()
            .find(|row| row.regime == r)
            .unwrap()
            .clone()
    };
    let (nt, ft, cl, weca) = (row(Regime::Nt), row(Regime::Ft), row(Regime::ClIl), row(Regime::Weca));
    assert_eq!(nt.n_seeds, 5);

    let weca_ad_gain = nt.ad_mean - weca.ad_mean;
    assert!(
        weca_ad_gain >= 2.0,
        "(a) WECA AD improvement {weca_ad_gain:.2} < 2 points"
    );
    let weca_nd_drift = (weca.nd_mean - nt.nd_mean).abs();
    assert!(
        weca_nd_drift <= 1.0,
        "(b) WECA ND drift {weca_nd_drift:.2} > 1 point"
    );
    assert!(
        ft.nd_mean > nt.nd_mean,
        "(c) FT ND {:.2} did not degrade vs NT {:.2}",
        ft.nd_mean,
        nt.nd_mean
    );
    let cl_ad_gain = nt.ad_mean - cl.ad_mean;
    assert!(cl_ad_gain >= 0.0, "(d) CL-IL AD improvement {cl_ad_gain:.2} < 0");

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1800.0,
        "took {elapsed:?}, budget 30 min"
    );
    let _ = std::fs::remove_dir_all(&dir);
    println!(
        "ACCEPTANCE 6 (directional benchmark): PASS \
         (a: WECA dAD = -{weca_ad_gain:.2} ≤ -2; b: |dND| = {weca_nd_drift:.2} ≤ 1; \
         c: FT dND = +{:.2} > 0; d: CL-IL dAD = -{cl_ad_gain:.2} ≤ 0; {elapsed:?})",
        ft.nd_mean - nt.nd_mean
    );
}

/// Criterion 7 — SMAPE properties: symmetry, positive-scale
/// invariance, and the 0–200 range on 10⁵ random pairs, plus the three
/// worked scalar examples at 1e-9.
#[test]
fn criterion_7_smape_properties() {
    let mut rng = Rng::new(707);
    for _ in 0..100_000 {
        let y = Tensor::matrix(1, 1, vec![rng.uniform(-100.0, 100.0)]).unwrap();
        let f = Tensor::matrix(1, 1, vec![rng.uniform(-100.0, 100.0)]).unwrap();
        let s = smape(&y, &f).unwrap();
        let s_rev = smape(&f, &y).unwrap();
        assert!((s - s_rev).abs() < 1e-12, "symmetry broken");
        assert!((0.0..=200.0).contains(&s), "range broken: {s}");
        let alpha = rng.uniform(0.01, 100.0);
        let ys = Tensor::matrix(1, 1, vec![y.data()[0] * alpha]).unwrap();
        let fs = Tensor::matrix(1, 1, vec![f.data()[0] * alpha]).unwrap();
        let ss = smape(&ys, &fs).unwrap();
        assert!((ss - s).abs() < 1e-9, "scale invariance broken: {s} vs {ss}");
    }
    let one = |v: f64| Tensor::matrix(1, 1, vec![v]).unwrap();
    assert!(smape(&one(7.0), &one(7.0)).unwrap().abs() < 1e-9);
    assert!((smape(&one(0.0), &one(5.0)).unwrap() - 200.0).abs() < 1e-9);
    let expect = 100.0 * 2.0 * 10.0 / 210.0;
    assert!((smape(&one(100.0), &one(110.0)).unwrap() - expect).abs() < 1e-9);
    println!("ACCEPTANCE 7 (SMAPE properties): PASS (10^5 pairs, 3 worked examples)");
}

/// Criterion 8 — determinism: repeating a (regime, seed) run produces
/// bit-identical checkpoint and report files.
#[test]
fn criterion_8_determinism() {
    let config = ExperimentConfig::parse(
        "data.n_series = 6\n\
         data.length = 240\n\
         window.input_len = 16\n\
         window.horizon = 4\n\
         model.latent_dim = 8\n\
         model.dilations = 1,2\n\
         train.batch_size = 16\n\
         train.max_epochs = 3\n\
         bench.seeds = 0\n",
    )
    .unwrap();
    let exp = bench::prepare(&config).unwrap();
    let dir_a = std::env::temp_dir().join("weca_acceptance_det_a");
    let dir_b = std::env::temp_dir().join("weca_acceptance_det_b");
    for d in [&dir_a, &dir_b] {
        let _ = std::fs::remove_dir_all(d);
        std::fs::create_dir_all(d).unwrap();
    }
    for regime in [Regime::Nt, Regime::Weca] {
        let run_a = bench::run_single(&exp, regime, 0, None).unwrap();
        bench::write_artifacts(&dir_a, &run_a, exp.fingerprint).unwrap();
        let run_b = bench::run_single(&exp, regime, 0, None).unwrap();
        bench::write_artifacts(&dir_b, &run_b, exp.fingerprint).unwrap();
        let ckpt_a = std::fs::read(bench::checkpoint_path(&dir_a, regime, 0)).unwrap();
        let ckpt_b = std::fs::read(bench::checkpoint_path(&dir_b, regime, 0)).unwrap();
        assert_eq!(ckpt_a, ckpt_b, "{regime} checkpoint not bit-identical");
        let rep_a = std::fs::read(bench::report_path(&dir_a, regime, 0)).unwrap();
        let rep_b = std::fs::read(bench::report_path(&dir_b, regime, 0)).unwrap();
        assert_eq!(rep_a, rep_b, "{regime} report not bit-identical");
    }
    for d in [&dir_a, &dir_b] {
        let _ = std::fs::remove_dir_all(d);
    }
    println!("ACCEPTANCE 8 (determinism): PASS (NT and WECA checkpoints and reports bit-identical)");
}
