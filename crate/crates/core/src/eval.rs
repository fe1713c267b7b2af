//! SMAPE evaluation, normal/anomaly-affected test-set construction,
//! and multi-seed aggregation with deltas against the NT baseline.
//!
//! SMAPE convention (documented in every report header): the bounded
//! symmetric form `(100/(H·C)) Σ 2|ŷ−y| / max(|y|+|ŷ|, 1e-8)`, ranging
//! 0–200. Zero-denominator timesteps saturate at 200 instead of
//! dividing by zero; an exact zero forecast of an exact zero target
//! counts as perfect. Evaluation happens in denormalized units, and
//! SMAPE is averaged within each series first, then across series.

use crate::anomaly::{self, AnomalyConfig};
use crate::datagen::{NormStats, SeriesSet, Window, WindowPlan};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::trainer::Regime;
use crate::Tensor;
use std::collections::BTreeMap;
use std::fmt::Write as _;

const SMAPE_EPS: f64 = 1e-8;

/// SMAPE of a forecast against its target, in percent (0–200).
pub fn smape(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    if y.shape() != y_hat.shape() {
        return Err(Error::ShapeMismatch {
            op: "smape",
            lhs: y.shape().to_vec(),
            rhs: y_hat.shape().to_vec(),
        });
    }
    let n = y.numel();
    let total: f64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&a, &b)| 2.0 * (b - a).abs() / (a.abs() + b.abs()).max(SMAPE_EPS))
        .sum();
    Ok(100.0 * total / n as f64)
}

/// Matched normal (ND) and anomaly-affected (AD) test windows.
///
/// AD windows are the ND windows with one anomaly injected each
/// (inputs and targets augmented exactly as at training time), sharing
/// origins so comparisons are paired.
pub fn build_test_sets(
    test: &SeriesSet,
    window_len: usize,
    horizon: usize,
    anomaly_cfg: &AnomalyConfig,
    seed: u64,
) -> Result<(Vec<Window>, Vec<Window>)> {
    let plan = WindowPlan::new(test, window_len, horizon, 1, 0)?;
    let nd = plan.all_windows(test);
    if nd.is_empty() {
        return Err(Error::InvalidArgument(
            "test partition yields no windows".into(),
        ));
    }
    let mut rng = Rng::new(derive_seed(seed, 0x7E57));
    let mut ad = Vec::with_capacity(nd.len());
    for w in &nd {
        let params = anomaly::sample_params(&mut rng, anomaly_cfg, window_len);
        let pair = anomaly::inject(&w.input, &w.target, &params, params.onset, anomaly_cfg)?;
        ad.push(Window {
            series_idx: w.series_idx,
            origin: w.origin,
            input: pair.augmented_input,
            target: pair.augmented_target,
        });
    }
    Ok((nd, ad))
}

/// Per-regime, per-seed SMAPE on the ND and AD test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub regime: Regime,
    pub seed: u64,
    /// Mean over series of per-series mean SMAPE, normal windows.
    pub smape_nd: f64,
    /// Same, anomaly-affected windows.
    pub smape_ad: f64,
    /// (series id, ND SMAPE, AD SMAPE).
    pub per_series: Vec<(String, f64, f64)>,
    /// Hash of the experiment config that produced this run.
    pub fingerprint: u64,
}

/// Evaluate a forecaster on paired ND/AD windows.
///
/// `forecast` maps a normalized input window to a normalized H×C
/// prediction; predictions and targets are denormalized with the train
/// statistics before SMAPE. Non-finite forecasts fail, naming the
/// offending window.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    forecast: &mut dyn FnMut(&Window) -> Result<Tensor>,
    nd: &[Window],
    ad: &[Window],
    test: &SeriesSet,
    stats: &NormStats,
    regime: Regime,
    seed: u64,
    fingerprint: u64,
) -> Result<RunReport> {
    if nd.len() != ad.len() || nd.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "evaluation needs equal non-empty ND/AD sets, got {} and {}",
            nd.len(),
            ad.len()
        )));
    }
    // per-series accumulation, keyed by series index
    let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for (w_nd, w_ad) in nd.iter().zip(ad) {
        debug_assert_eq!(w_nd.series_idx, w_ad.series_idx);
        debug_assert_eq!(w_nd.origin, w_ad.origin);
        let id = &test.series[w_nd.series_idx].id;
        let mut score = |w: &Window| -> Result<f64> {
            let pred = forecast(w)?;
            if !pred.all_finite() {
                return Err(Error::Train(format!(
                    "non-finite forecast for window (series `{id}`, origin {})",
                    w.origin
                )));
            }
            let denorm = |t: &Tensor| -> Result<Tensor> {
                let data = t
                    .data()
                    .iter()
                    .map(|&v| stats.denormalize_value(id, v))
                    .collect::<Result<Vec<f64>>>()?;
                Tensor::new(t.shape().to_vec(), data)
            };
            smape(&denorm(&w.target)?, &denorm(&pred)?)
        };
        let s_nd = score(w_nd)?;
        let s_ad = score(w_ad)?;
        let entry = acc.entry(w_nd.series_idx).or_insert((0.0, 0.0, 0));
        entry.0 += s_nd;
        entry.1 += s_ad;
        entry.2 += 1;
    }
    let per_series: Vec<(String, f64, f64)> = acc
        .into_iter()
        .map(|(idx, (nd_sum, ad_sum, n))| {
            (
                test.series[idx].id.clone(),
                nd_sum / n as f64,
                ad_sum / n as f64,
            )
        })
        .collect();
    let k = per_series.len() as f64;
    let smape_nd = per_series.iter().map(|(_, a, _)| a).sum::<f64>() / k;
    let smape_ad = per_series.iter().map(|(_, _, b)| b).sum::<f64>() / k;
    Ok(RunReport {
        regime,
        seed,
        smape_nd,
        smape_ad,
        per_series,
        fingerprint,
    })
}

const REPORT_PREAMBLE: &str = "# weca run report\n\
     # smape: symmetric 0-200 form, 2|f-y|/max(|y|+|f|, 1e-8), denormalized units,\n\
     # averaged within series then across series\n";

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_PREAMBLE);
        let _ = writeln!(out, "regime,seed,series_id,smape_nd,smape_ad,fingerprint");
        let _ = writeln!(
            out,
            "{},{},overall,{},{},{:016x}",
            self.regime, self.seed, self.smape_nd, self.smape_ad, self.fingerprint
        );
        for (id, nd, ad) in &self.per_series {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:016x}",
                self.regime, self.seed, id, nd, ad, self.fingerprint
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<RunReport> {
        let mut regime = None;
        let mut seed = 0u64;
        let mut fingerprint = 0u64;
        let mut overall = None;
        let mut per_series = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.starts_with('#') || line.trim().is_empty() || line.starts_with("regime,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Csv {
                    line: line_no,
                    message: format!("expected 6 fields, got `{line}`"),
                });
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Csv {
                    line: line_no,
                    message: format!("non-numeric value `{s}`"),
                })
            };
            regime = Some(Regime::parse(fields[0])?);
            seed = fields[1].parse().map_err(|_| Error::Csv {
                line: line_no,
                message: format!("bad seed `{}`", fields[1]),
            })?;
            fingerprint = u64::from_str_radix(fields[5], 16).map_err(|_| Error::Csv {
                line: line_no,
                message: format!("bad fingerprint `{}`", fields[5]),
            })?;
            let nd = parse_f(fields[2 + 1])?;
            let ad = parse_f(fields[2 + 2])?;
            if fields[2] == "overall" {
                overall = Some((nd, ad));
            } else {
                per_series.push((fields[2].to_string(), nd, ad));
            }
        }
        let regime = regime.ok_or(Error::Csv {
            line: 1,
            message: "report has no data rows".into(),
        })?;
        let (smape_nd, smape_ad) = overall.ok_or(Error::Csv {
            line: 1,
            message: "report has no overall row".into(),
        })?;
        Ok(RunReport {
            regime,
            seed,
            smape_nd,
            smape_ad,
            per_series,
            fingerprint,
        })
    }
}

/// Per-regime mean ± std over seeds, with deltas against NT.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub regime: Regime,
    pub n_seeds: usize,
    pub nd_mean: f64,
    pub nd_std: f64,
    /// regime ND mean − NT ND mean (negative = improvement).
    pub nd_delta: f64,
    pub ad_mean: f64,
    pub ad_std: f64,
    pub ad_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
    pub fingerprint: u64,
}

/// Aggregate run reports: sample std (n−1 denominator, 0 when n = 1),
/// Δ columns relative to the NT mean. Permutation-invariant in the
/// report list; NT must be present.
pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    }
    let fingerprint = reports[0].fingerprint;
    let mut by_regime: BTreeMap<&'static str, Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        by_regime.entry(r.regime.name()).or_default().push(r);
    }
    let stats = |rs: &[&RunReport], pick: fn(&RunReport) -> f64| -> (f64, f64) {
        let n = rs.len() as f64;
        let mean = rs.iter().map(|r| pick(r)).sum::<f64>() / n;
        let std = if rs.len() < 2 {
            0.0
        } else {
            (rs.iter().map(|r| (pick(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        (mean, std)
    };
    let nt = by_regime
        .get(Regime::Nt.name())
        .ok_or_else(|| Error::InvalidArgument("aggregation requires NT reports".into()))?;
    let mut nt_sorted: Vec<&RunReport> = nt.clone();
    nt_sorted.sort_by_key(|r| r.seed);
    let (nt_nd_mean, _) = stats(&nt_sorted, |r| r.smape_nd);
    let (nt_ad_mean, _) = stats(&nt_sorted, |r| r.smape_ad);

    let mut rows = Vec::new();
    for regime in Regime::ALL {
        let Some(rs) = by_regime.get(regime.name()) else {
            continue;
        };
        let mut rs: Vec<&RunReport> = rs.clone();
        rs.sort_by_key(|r| r.seed);
        let (nd_mean, nd_std) = stats(&rs, |r| r.smape_nd);
        let (ad_mean, ad_std) = stats(&rs, |r| r.smape_ad);
        rows.push(AggregateRow {
            regime,
            n_seeds: rs.len(),
            nd_mean,
            nd_std,
            nd_delta: nd_mean - nt_nd_mean,
            ad_mean,
            ad_std,
            ad_delta: ad_mean - nt_ad_mean,
        });
    }
    Ok(AggregateReport { rows, fingerprint })
}

impl AggregateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "# weca benchmark report\n\
             # smape: symmetric 0-200 form, denormalized units; delta vs NT (negative = better)\n",
        );
        let _ = writeln!(
            out,
            "regime,seeds,nd_mean,nd_std,nd_delta,ad_mean,ad_std,ad_delta,fingerprint"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:016x}",
                r.regime,
                r.n_seeds,
                r.nd_mean,
                r.nd_std,
                r.nd_delta,
                r.ad_mean,
                r.ad_std,
                r.ad_delta,
                self.fingerprint
            );
        }
        out
    }

    /// Human-readable table: regime, ND mean ± std with Δ, AD likewise.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>16} {:>8}   {:>16} {:>8}",
            "regime", "ND SMAPE", "dND", "AD SMAPE", "dAD"
        );
        let _ = writeln!(out, "{}", "-".repeat(64));
        for r in &self.rows {
            let fmt_delta = |d: f64, is_nt: bool| {
                if is_nt {
                    "--".to_string()
                } else {
                    format!("{d:+.2}")
                }
            };
            let is_nt = r.regime == Regime::Nt;
            let _ = writeln!(
                out,
                "{:<10} {:>10.2} {:>5} {:>8}   {:>10.2} {:>5} {:>8}",
                r.regime.name(),
                r.nd_mean,
                format!("±{:.2}", r.nd_std),
                fmt_delta(r.nd_delta, is_nt),
                r.ad_mean,
                format!("±{:.2}", r.ad_std),
                fmt_delta(r.ad_delta, is_nt),
            );
        }
        let _ = writeln!(out, "(SMAPE %, mean ± std over seeds; negative delta = better)");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, NormStats, Series, SynthConfig};

    fn tensor1(v: f64) -> Tensor {
        Tensor::matrix(1, 1, vec![v]).unwrap()
    }

    #[test]
    fn smape_basics() {
        let y = Tensor::matrix(2, 1, vec![3.0, 5.0]).unwrap();
        assert_eq!(smape(&y, &y).unwrap(), 0.0);
        // disjoint support saturates the bound
        assert_eq!(smape(&tensor1(0.0), &tensor1(5.0)).unwrap(), 200.0);
        // the worked scalar case: y=100, f=110 → 100·2·10/210
        let expect = 100.0 * 2.0 * 10.0 / 210.0;
        assert!((smape(&tensor1(100.0), &tensor1(110.0)).unwrap() - expect).abs() < 1e-9);
        // both zero counts as perfect, not as 200
        assert_eq!(smape(&tensor1(0.0), &tensor1(0.0)).unwrap(), 0.0);
        assert!(smape(&y, &tensor1(1.0)).is_err());
    }

    #[test]
    fn smape_is_symmetric_scale_invariant_and_bounded() {
        let mut rng = Rng::new(70);
        for _ in 0..2000 {
            let a = tensor1(rng.uniform(-50.0, 50.0));
            let b = tensor1(rng.uniform(-50.0, 50.0));
            let s1 = smape(&a, &b).unwrap();
            let s2 = smape(&b, &a).unwrap();
            assert!((s1 - s2).abs() < 1e-12);
            assert!((0.0..=200.0).contains(&s1));
            let alpha = rng.uniform(0.01, 100.0);
            let sa = Tensor::matrix(1, 1, vec![a.data()[0] * alpha]).unwrap();
            let sb = Tensor::matrix(1, 1, vec![b.data()[0] * alpha]).unwrap();
            assert!((smape(&sa, &sb).unwrap() - s1).abs() < 1e-9);
        }
    }

    fn test_set() -> SeriesSet {
        generate_synthetic(&SynthConfig {
            n_series: 3,
            length: 60,
            seed: 42,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn test_sets_are_paired_and_deterministic() {
        let set = test_set();
        let cfg = AnomalyConfig::default();
        let (nd, ad) = build_test_sets(&set, 16, 4, &cfg, 3).unwrap();
        assert_eq!(nd.len(), ad.len());
        for (a, b) in nd.iter().zip(&ad) {
            assert_eq!(a.series_idx, b.series_idx);
            assert_eq!(a.origin, b.origin);
        }
        let (_, ad2) = build_test_sets(&set, 16, 4, &cfg, 3).unwrap();
        for (a, b) in ad.iter().zip(&ad2) {
            assert_eq!(a.input.data(), b.input.data());
            assert_eq!(a.target.data(), b.target.data());
        }
    }

    #[test]
    fn zero_scale_injection_makes_ad_equal_nd() {
        let set = test_set();
        let cfg = AnomalyConfig {
            scale: 0.0,
            ..AnomalyConfig::default()
        };
        let (nd, ad) = build_test_sets(&set, 16, 4, &cfg, 3).unwrap();
        for (a, b) in nd.iter().zip(&ad) {
            assert_eq!(a.input.data(), b.input.data());
            assert_eq!(a.target.data(), b.target.data());
        }
    }

    fn identity_stats(set: &SeriesSet) -> NormStats {
        // mean 0, std 1: stats computed from constant-free proxy series
        let proxy = SeriesSet {
            series: set
                .series
                .iter()
                .map(|s| Series {
                    id: s.id.clone(),
                    start_date: s.start_date,
                    values: vec![-1.0, 1.0], // mean 0, population std 1
                })
                .collect(),
        };
        NormStats::from_train(&proxy).unwrap()
    }

    #[test]
    fn perfect_oracle_scores_zero_and_zero_model_saturates() {
        let set = test_set();
        let cfg = AnomalyConfig::default();
        let (nd, ad) = build_test_sets(&set, 16, 4, &cfg, 5).unwrap();
        let stats = identity_stats(&set);
        let report = evaluate(
            &mut |w: &Window| Ok(w.target.clone()),
            &nd,
            &ad,
            &set,
            &stats,
            Regime::Nt,
            0,
            7,
        )
        .unwrap();
        assert_eq!(report.smape_nd, 0.0);
        assert_eq!(report.smape_ad, 0.0);

        // all-positive targets vs constant zero forecast → 200
        let zero = evaluate(
            &mut |w: &Window| Ok(Tensor::zeros(w.target.shape().to_vec())),
            &nd,
            &nd.to_vec(),
            &set,
            &stats,
            Regime::Nt,
            0,
            7,
        )
        .unwrap();
        assert_eq!(zero.smape_nd, 200.0);
    }

    #[test]
    fn non_finite_forecast_names_the_window() {
        let set = test_set();
        let cfg = AnomalyConfig::default();
        let (nd, ad) = build_test_sets(&set, 16, 4, &cfg, 5).unwrap();
        let stats = identity_stats(&set);
        let err = evaluate(
            &mut |w: &Window| {
                Ok(Tensor::full(
                    w.target.shape().to_vec(),
                    f64::NAN,
                ))
            },
            &nd,
            &ad,
            &set,
            &stats,
            Regime::Nt,
            0,
            7,
        )
        .unwrap_err();
        assert!(err.to_string().contains("atm_000"), "{err}");
    }

    #[test]
    fn run_report_csv_round_trips() {
        let report = RunReport {
            regime: Regime::Weca,
            seed: 3,
            smape_nd: 12.5,
            smape_ad: 17.25,
            per_series: vec![("a".into(), 10.0, 15.0), ("b".into(), 15.0, 19.5)],
            fingerprint: 0xABCD,
        };
        let parsed = RunReport::from_csv(&report.to_csv()).unwrap();
        assert_eq!(report, parsed);
    }

    fn mk_report(regime: Regime, seed: u64, nd: f64, ad: f64) -> RunReport {
        RunReport {
            regime,
            seed,
            smape_nd: nd,
            smape_ad: ad,
            per_series: vec![],
            fingerprint: 1,
        }
    }

    #[test]
    fn aggregate_hand_case_and_deltas() {
        let reports = vec![
            mk_report(Regime::Nt, 0, 30.0, 40.0),
            mk_report(Regime::Nt, 1, 32.0, 42.0),
            mk_report(Regime::Weca, 0, 31.0, 35.0),
            mk_report(Regime::Weca, 1, 31.0, 37.0),
        ];
        let agg = aggregate(&reports).unwrap();
        let nt = &agg.rows[0];
        assert_eq!(nt.regime, Regime::Nt);
        assert_eq!(nt.nd_mean, 31.0);
        assert!((nt.nd_std - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(nt.nd_delta, 0.0);
        assert_eq!(nt.ad_delta, 0.0);
        let weca = agg.rows.iter().find(|r| r.regime == Regime::Weca).unwrap();
        assert_eq!(weca.nd_delta, 0.0);
        assert_eq!(weca.ad_delta, -5.0);

        // permutation invariance
        let mut shuffled = reports.clone();
        shuffled.reverse();
        assert_eq!(aggregate(&shuffled).unwrap(), agg);
    }

    #[test]
    fn aggregate_single_seed_flags_n1() {
        let agg = aggregate(&[mk_report(Regime::Nt, 0, 30.0, 40.0)]).unwrap();
        assert_eq!(agg.rows[0].n_seeds, 1);
        assert_eq!(agg.rows[0].nd_std, 0.0);
    }

    #[test]
    fn aggregate_without_nt_is_an_error() {
        let err = aggregate(&[mk_report(Regime::Weca, 0, 30.0, 40.0)]).unwrap_err();
        assert!(err.to_string().contains("NT"), "{err}");
    }

    use crate::rng::Rng;
}
