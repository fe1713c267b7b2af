//! Multi-seed benchmark driver: runs training regimes across seeds,
//! evaluates each on shared normal/anomaly-affected test sets, and
//! aggregates into the regime-comparison report.
//!
//! NT runs first (FT fine-tunes from its checkpoint file, exercising
//! the round-trip); the remaining (regime, seed) tasks fan out to a
//! worker pool. Workers share only read-only data and write to disjoint
//! paths, so results are bit-identical regardless of `jobs`.

use crate::config::{DataSource, ExperimentConfig};
use crate::datagen::{self, NormStats, SeriesSet, Window};
use crate::error::{Error, Result};
use crate::eval::{self, AggregateReport, RunReport};
use crate::logging;
use crate::model::{self, ModelParams};
use crate::trainer::{self, Regime, TrainData, TrainingLog};
use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Normalized partitions plus the shared paired test sets.
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub train: SeriesSet,
    pub val: SeriesSet,
    pub test: SeriesSet,
    pub stats: NormStats,
    pub nd: Vec<Window>,
    pub ad: Vec<Window>,
    pub fingerprint: u64,
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment> {
    let raw = match config.source {
        DataSource::Synthetic => datagen::generate_synthetic(&config.synth_config())?,
        DataSource::Csv => {
            let path = config.csv_path.as_ref().ok_or_else(|| {
                Error::Config("data.source = csv requires data.csv_path".into())
            })?;
            datagen::load_csv(path)?
        }
    };
    let min_len = config.window_len + config.horizon;
    raw.validate(min_len)?;
    let (train, val, test) = datagen::split(&raw, &config.split, min_len)?;
    let stats = NormStats::from_train(&train)?;
    let train = stats.normalize(&train)?;
    let val = stats.normalize(&val)?;
    let test = stats.normalize(&test)?;
    let (nd, ad) = eval::build_test_sets(
        &test,
        config.window_len,
        config.horizon,
        &config.anomaly,
        config.eval_seed,
    )?;
    Ok(PreparedExperiment {
        fingerprint: config.fingerprint(),
        config: config.clone(),
        train,
        val,
        test,
        stats,
        nd,
        ad,
    })
}

pub struct RunArtifacts {
    pub regime: Regime,
    pub seed: u64,
    pub params: ModelParams,
    pub log: TrainingLog,
    pub report: RunReport,
}

/// Train and evaluate one (regime, seed) run.
pub fn run_single(
    exp: &PreparedExperiment,
    regime: Regime,
    seed: u64,
    init: Option<ModelParams>,
) -> Result<RunArtifacts> {
    let cfg = &exp.config;
    let data = TrainData {
        train: exp.train.clone(),
        val: exp.val.clone(),
        window_len: cfg.window_len,
        horizon: cfg.horizon,
    };
    logging::log(
        logging::Level::Debug,
        &format!("training {regime} seed {seed}"),
    );
    let outcome = trainer::train(
        regime,
        &data,
        &cfg.encoder_config(),
        &cfg.decoder_config(),
        &cfg.train_config(seed),
        &cfg.anomaly,
        init,
    )?;
    let params = outcome.params;
    let mut forecast = |w: &Window| model::predict(&params, &w.input);
    let report = eval::evaluate(
        &mut forecast,
        &exp.nd,
        &exp.ad,
        &exp.test,
        &exp.stats,
        regime,
        seed,
        exp.fingerprint,
    )?;
    logging::log(
        logging::Level::Info,
        &format!(
            "{regime} seed {seed}: ND {:.2} AD {:.2} (best epoch {})",
            report.smape_nd, report.smape_ad, outcome.log.best_epoch
        ),
    );
    Ok(RunArtifacts {
        regime,
        seed,
        params,
        log: outcome.log,
        report,
    })
}

pub fn checkpoint_path(out_dir: &Path, regime: Regime, seed: u64) -> PathBuf {
    out_dir
        .join("checkpoints")
        .join(format!("{}_seed{}.ckpt", regime.name(), seed))
}

pub fn report_path(out_dir: &Path, regime: Regime, seed: u64) -> PathBuf {
    out_dir
        .join("reports")
        .join(format!("{}_seed{}.csv", regime.name(), seed))
}

pub fn train_log_path(out_dir: &Path, regime: Regime, seed: u64) -> PathBuf {
    out_dir
        .join("logs")
        .join(format!("{}_seed{}_train.csv", regime.name(), seed))
}

pub fn write_artifacts(out_dir: &Path, run: &RunArtifacts, fingerprint: u64) -> Result<()> {
    for sub in ["checkpoints", "reports", "logs"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    model::save_checkpoint(
        &run.params,
        fingerprint,
        &checkpoint_path(out_dir, run.regime, run.seed),
    )?;
    std::fs::write(
        report_path(out_dir, run.regime, run.seed),
        run.report.to_csv(),
    )?;
    std::fs::write(
        train_log_path(out_dir, run.regime, run.seed),
        run.log.to_csv(),
    )?;
    Ok(())
}

/// Order-preserving worker pool over independent tasks.
fn run_pool<T, R, F>(tasks: Vec<T>, jobs: usize, run: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = tasks.len();
    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(tasks.into_iter().enumerate().collect());
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    let workers = jobs.max(1).min(n.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let Some((idx, task)) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                let out = run(task);
                results.lock().unwrap()[idx] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker pool dropped a task"))
        .collect()
}

pub struct BenchOutcome {
    pub aggregate: AggregateReport,
    pub reports: Vec<RunReport>,
    /// (task label, error message) for every failed run.
    pub failures: Vec<(String, String)>,
}

/// Run `regimes` × `bench.seeds`, writing per-run artifacts and the
/// aggregate report under `out_dir`.
pub fn run_benchmark(
    config: &ExperimentConfig,
    regimes: &[Regime],
    out_dir: &Path,
    jobs: usize,
) -> Result<BenchOutcome> {
    let exp = prepare(config)?;
    std::fs::create_dir_all(out_dir)?;
    let seeds = config.bench_seeds.clone();
    let mut failures: Vec<(String, String)> = Vec::new();
    let mut reports: Vec<RunReport> = Vec::new();

    // Phase 1: NT (everything else either starts from scratch or from
    // the NT checkpoint).
    let need_nt = regimes.contains(&Regime::Nt)
        || regimes.contains(&Regime::Ft)
        || (config.from_checkpoint && regimes.iter().any(|r| r.is_contrastive()));
    if need_nt {
        let nt_results = run_pool(seeds.clone(), jobs, |seed| {
            let run = run_single(&exp, Regime::Nt, seed, None)?;
            write_artifacts(out_dir, &run, exp.fingerprint)?;
            Ok::<RunArtifacts, Error>(run)
        });
        for (seed, res) in seeds.iter().zip(nt_results) {
            match res {
                Ok(run) => {
                    if regimes.contains(&Regime::Nt) {
                        reports.push(run.report);
                    }
                }
                Err(e) => failures.push((format!("NT seed {seed}"), e.to_string())),
            }
        }
    }

    // Phase 2: the remaining regimes; FT reloads the NT checkpoint from
    // disk so the fine-tune start is the round-tripped parameter vector.
    let mut tasks: Vec<(Regime, u64)> = Vec::new();
    for &regime in regimes {
        if regime == Regime::Nt {
            continue;
        }
        for &seed in &seeds {
            tasks.push((regime, seed));
        }
    }
    let phase2 = run_pool(tasks.clone(), jobs, |(regime, seed)| {
        let warm_start = regime == Regime::Ft
            || (config.from_checkpoint && regime.is_contrastive());
        let init = if warm_start {
            let path = checkpoint_path(out_dir, Regime::Nt, seed);
            if !path.exists() {
                return Err(Error::Train(format!(
                    "{regime} seed {seed}: NT checkpoint `{}` is missing",
                    path.display()
                )));
            }
            Some(model::load_checkpoint(&path)?.0)
        } else {
            None
        };
        let run = run_single(&exp, regime, seed, init)?;
        write_artifacts(out_dir, &run, exp.fingerprint)?;
        Ok::<RunArtifacts, Error>(run)
    });
    for ((regime, seed), res) in tasks.into_iter().zip(phase2) {
        match res {
            Ok(run) => reports.push(run.report),
            Err(e) => failures.push((format!("{regime} seed {seed}"), e.to_string())),
        }
    }

    let aggregate = eval::aggregate(&reports)?;
    let mut csv = aggregate.to_csv();
    if !failures.is_empty() {
        let mut marked = String::from("# INCOMPLETE: some runs failed\n");
        for (task, err) in &failures {
            marked.push_str(&format!("# failed: {task}: {err}\n"));
        }
        csv = marked + &csv;
    }
    std::fs::write(out_dir.join("bench_report.csv"), csv)?;
    std::fs::write(out_dir.join("bench_report.txt"), aggregate.to_table())?;
    Ok(BenchOutcome {
        aggregate,
        reports,
        failures,
    })
}
