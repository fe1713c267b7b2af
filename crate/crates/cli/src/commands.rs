//! Command implementations.

use crate::{CliError, Flags};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use weca_core::anomaly;
use weca_core::bench;
use weca_core::config::ExperimentConfig;
use weca_core::datagen::{self, WindowPlan};
use weca_core::eval::{self, RunReport};
use weca_core::model;
use weca_core::svg::{line_plot, PolyLine};
use weca_core::trainer::Regime;
use weca_core::{log_info, Error, Tensor};

fn load_config(flags: &Flags) -> Result<ExperimentConfig, CliError> {
    match &flags.config {
        Some(path) => Ok(ExperimentConfig::from_file(Path::new(path))?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn out_dir(flags: &Flags) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&flags.out);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create `{}`: {e}", dir.display())))?;
    Ok(dir)
}

fn required_regime(flags: &Flags) -> Result<Regime, CliError> {
    let name = flags
        .regime
        .as_ref()
        .ok_or_else(|| CliError::Usage("--regime is required".into()))?;
    Ok(Regime::parse(name)?)
}

/// `weca gen`: write the synthetic dataset in the CSV contract.
pub fn gen(flags: &Flags) -> Result<(), CliError> {
    let config = load_config(flags)?;
    let dir = out_dir(flags)?;
    let set = datagen::generate_synthetic(&config.synth_config())?;
    let path = dir.join("dataset.csv");
    datagen::write_csv(&set, &path)?;
    let rows: usize = set.series.iter().map(|s| s.values.len()).sum();
    println!(
        "wrote {rows} data rows ({} series) to {} (config fingerprint {:016x})",
        set.len(),
        path.display(),
        config.fingerprint()
    );
    Ok(())
}

/// `weca inject-preview`: CSV columns (t, original, anomaly, augmented)
/// over one window plus horizon, with an SVG rendering of the three
/// aligned curves.
pub fn inject_preview(flags: &Flags) -> Result<(), CliError> {
    let config = load_config(flags)?;
    let dir = out_dir(flags)?;
    let exp = bench::prepare(&config)?;

    let series_idx = match &flags.series {
        None => 0,
        Some(id) => exp
            .test
            .series
            .iter()
            .position(|s| &s.id == id)
            .ok_or_else(|| CliError::Usage(format!("unknown series id `{id}`")))?,
    };
    let (t_len, horizon) = (config.window_len, config.horizon);
    let plan = WindowPlan::new(&exp.test, t_len, horizon, 1, 0)?;
    let series_len = exp.test.series[series_idx].values.len();
    let window = plan.window(&exp.test, series_idx, series_len - t_len - horizon);

    let mut rng = weca_core::rng::Rng::new(flags.seed);
    let mut params = anomaly::sample_params(&mut rng, &config.anomaly, t_len);
    if let Some(onset) = flags.onset {
        if onset >= t_len {
            return Err(CliError::Usage(format!(
                "--onset {onset} out of range for window length {t_len}"
            )));
        }
        params.onset = onset;
    }
    let pair = anomaly::inject(
        &window.input,
        &window.target,
        &params,
        params.onset,
        &config.anomaly,
    )?;

    let id = &exp.test.series[series_idx].id;
    let denorm = |t: &Tensor| -> Result<Vec<f64>, Error> {
        t.data()
            .iter()
            .map(|&v| exp.stats.denormalize_value(id, v))
            .collect()
    };
    let mut original = denorm(&pair.original_input)?;
    original.extend(denorm(&pair.original_target)?);
    let mut augmented = denorm(&pair.augmented_input)?;
    augmented.extend(denorm(&pair.augmented_target)?);
    let anomaly_col: Vec<f64> = augmented
        .iter()
        .zip(&original)
        .map(|(&a, &o)| a - o)
        .collect();

    let mut csv = String::new();
    let _ = writeln!(csv, "# weca inject-preview; series={id}");
    let _ = writeln!(
        csv,
        "# params amplitude={} decay={} shape={} sign={} injection_start={}",
        params.amplitude, params.decay, params.shape, params.sign, params.onset
    );
    let _ = writeln!(csv, "# fingerprint {:016x}", exp.fingerprint);
    let _ = writeln!(csv, "t,original,anomaly,augmented");
    for t in 0..original.len() {
        let _ = writeln!(csv, "{t},{},{},{}", original[t], anomaly_col[t], augmented[t]);
    }
    let csv_path = dir.join("preview.csv");
    std::fs::write(&csv_path, csv)?;

    let svg = line_plot(
        &format!("anomaly injection preview ({id})"),
        &[
            PolyLine {
                label: "original",
                values: &original,
                color: "grey",
                dashed: false,
            },
            PolyLine {
                label: "anomaly",
                values: &anomaly_col,
                color: "steelblue",
                dashed: true,
            },
            PolyLine {
                label: "augmented",
                values: &augmented,
                color: "crimson",
                dashed: false,
            },
        ],
    );
    let svg_path = dir.join("preview.svg");
    std::fs::write(&svg_path, svg)?;
    println!(
        "wrote {} and {} (injection at t={})",
        csv_path.display(),
        svg_path.display(),
        params.onset
    );
    Ok(())
}

/// `weca train`: one (regime, seed) run; FT resumes from the NT
/// checkpoint in the output directory.
pub fn train(flags: &Flags) -> Result<(), CliError> {
    let config = load_config(flags)?;
    let dir = out_dir(flags)?;
    let regime = required_regime(flags)?;
    let exp = bench::prepare(&config)?;
    let warm_start = regime == Regime::Ft || (config.from_checkpoint && regime.is_contrastive());
    let init = if warm_start {
        let path = bench::checkpoint_path(&dir, Regime::Nt, flags.seed);
        if !path.exists() {
            return Err(CliError::Runtime(format!(
                "{regime} needs the NT checkpoint; `{}` is missing (run `weca train --regime NT` first)",
                path.display()
            )));
        }
        Some(model::load_checkpoint(&path)?.0)
    } else {
        None
    };
    let run = bench::run_single(&exp, regime, flags.seed, init)?;
    bench::write_artifacts(&dir, &run, exp.fingerprint)?;
    println!(
        "{} seed {}: ND SMAPE {:.2}, AD SMAPE {:.2} (best epoch {}); artifacts in {}",
        regime, flags.seed, run.report.smape_nd, run.report.smape_ad, run.log.best_epoch,
        dir.display()
    );
    Ok(())
}

/// `weca eval`: score an existing checkpoint on the ND/AD test sets.
pub fn eval(flags: &Flags) -> Result<(), CliError> {
    let config = load_config(flags)?;
    let dir = out_dir(flags)?;
    let regime = required_regime(flags)?;
    let exp = bench::prepare(&config)?;
    let path = bench::checkpoint_path(&dir, regime, flags.seed);
    if !path.exists() {
        return Err(CliError::Runtime(format!(
            "checkpoint `{}` not found; train first",
            path.display()
        )));
    }
    let (params, fingerprint) = model::load_checkpoint(&path)?;
    if fingerprint != exp.fingerprint {
        log_info!(
            "checkpoint fingerprint {fingerprint:016x} differs from config {:016x}",
            exp.fingerprint
        );
    }
    let mut forecast = |w: &datagen::Window| model::predict(&params, &w.input);
    let report = eval::evaluate(
        &mut forecast,
        &exp.nd,
        &exp.ad,
        &exp.test,
        &exp.stats,
        regime,
        flags.seed,
        exp.fingerprint,
    )?;
    std::fs::write(
        bench::report_path(&dir, regime, flags.seed),
        report.to_csv(),
    )?;
    println!(
        "{} seed {}: ND SMAPE {:.2}, AD SMAPE {:.2}",
        regime, flags.seed, report.smape_nd, report.smape_ad
    );
    Ok(())
}

/// `weca bench`: the four main regimes across bench.seeds, aggregated.
pub fn bench(flags: &Flags) -> Result<(), CliError> {
    let config = load_config(flags)?;
    let dir = out_dir(flags)?;
    let regimes = [Regime::Nt, Regime::Ft, Regime::ClIl, Regime::Weca];
    let outcome = bench::run_benchmark(&config, &regimes, &dir, flags.jobs)?;
    print!("{}", outcome.aggregate.to_table());
    println!("report: {}", dir.join("bench_report.csv").display());
    if !outcome.failures.is_empty() {
        for (task, err) in &outcome.failures {
            eprintln!("failed: {task}: {err}");
        }
        return Err(CliError::Runtime(format!(
            "{} of {} runs failed; report marked incomplete",
            outcome.failures.len(),
            outcome.failures.len() + outcome.reports.len()
        )));
    }
    Ok(())
}

/// `weca report`: re-aggregate run reports already under `--out`.
pub fn report(flags: &Flags) -> Result<(), CliError> {
    let dir = out_dir(flags)?;
    let reports_dir = dir.join("reports");
    let mut reports: Vec<RunReport> = Vec::new();
    let entries = std::fs::read_dir(&reports_dir).map_err(|e| {
        CliError::Runtime(format!(
            "cannot read `{}`: {e} (nothing to aggregate?)",
            reports_dir.display()
        ))
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    for path in &paths {
        let text = std::fs::read_to_string(path)?;
        reports.push(RunReport::from_csv(&text)?);
    }
    let aggregate = eval::aggregate(&reports)?;
    std::fs::write(dir.join("bench_report.csv"), aggregate.to_csv())?;
    std::fs::write(dir.join("bench_report.txt"), aggregate.to_table())?;
    print!("{}", aggregate.to_table());
    println!("aggregated {} run reports from {}", reports.len(), reports_dir.display());
    Ok(())
}
