//! `weca` — generate data, preview anomaly injection, train the
//! regimes, evaluate, and run the full multi-seed benchmark.
//!
//! Exit codes: 0 success, 1 usage error (bad arguments or config),
//! 2 runtime failure. Verbosity via `WECA_LOG` ∈ {error, info, debug}.

mod commands;

use std::process::ExitCode;
use weca_core::Error;

const USAGE: &str = "\
weca — anomaly-aware forecasting experiments

USAGE:
    weca <COMMAND> [FLAGS]

COMMANDS:
    gen             generate the synthetic dataset and write it as CSV
    inject-preview  write (t, original, anomaly, augmented) columns and an SVG plot
    train           train one regime for one seed
    eval            evaluate a trained checkpoint on the ND/AD test sets
    bench           run {NT, FT, CL-IL, WECA} across bench.seeds and aggregate
    report          re-aggregate run reports already on disk

FLAGS:
    --config <path>   experiment config file (dotted keys; defaults apply if omitted)
    --seed <u64>      seed for train/eval/inject-preview (default 0)
    --regime <name>   NT | FT | CL-IL | WECA | ABL-IL | ABL-TL | ABL-ILTL
    --jobs <n>        bench worker threads (default: available cores)
    --out <dir>       output directory (default `out`)
    --series <id>     inject-preview: series to preview (default: first)
    --onset <n>       inject-preview: injection timestep inside the window
    --help            print this help

ENVIRONMENT:
    WECA_LOG          error | info | debug (default info)
";

/// Usage errors exit 1, runtime failures exit 2.
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct Flags {
    pub config: Option<String>,
    pub seed: u64,
    pub regime: Option<String>,
    pub jobs: usize,
    pub out: String,
    pub series: Option<String>,
    pub onset: Option<usize>,
}

impl Default for Flags {
    fn default() -> Self {
        Flags {
            config: None,
            seed: 0,
            regime: None,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: "out".into(),
            series: None,
            onset: None,
        }
    }
}

fn parse_flags(args: &[String]) -> Result<Flags, CliError> {
    let mut flags = Flags::default();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| -> Result<&String, CliError> {
            it.next()
                .ok_or_else(|| CliError::Usage(format!("flag {name} needs a value")))
        };
        match arg.as_str() {
            "--config" => flags.config = Some(take("--config")?.clone()),
            "--seed" => {
                let v = take("--seed")?;
                flags.seed = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("--seed: `{v}` is not an integer")))?;
            }
            "--regime" => flags.regime = Some(take("--regime")?.clone()),
            "--jobs" => {
                let v = take("--jobs")?;
                flags.jobs = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("--jobs: `{v}` is not an integer")))?;
                if flags.jobs == 0 {
                    return Err(CliError::Usage("--jobs must be ≥ 1".into()));
                }
            }
            "--out" => flags.out = take("--out")?.clone(),
            "--series" => flags.series = Some(take("--series")?.clone()),
            "--onset" => {
                let v = take("--onset")?;
                flags.onset = Some(v.parse().map_err(|_| {
                    CliError::Usage(format!("--onset: `{v}` is not an integer"))
                })?);
            }
            "--help" | "-h" => {
                print!("{USAGE}");
                std::process::exit(0);
            }
            other => return Err(CliError::Usage(format!("unknown flag `{other}`"))),
        }
    }
    Ok(flags)
}

fn run() -> Result<(), CliError> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = args.first() else {
        return Err(CliError::Usage("missing command".into()));
    };
    if command == "--help" || command == "-h" {
        print!("{USAGE}");
        return Ok(());
    }
    let flags = parse_flags(&args[1..])?;
    match command.as_str() {
        "gen" => commands::gen(&flags),
        "inject-preview" => commands::inject_preview(&flags),
        "train" => commands::train(&flags),
        "eval" => commands::eval(&flags),
        "bench" => commands::bench(&flags),
        "report" => commands::report(&flags),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!();
            eprint!("{USAGE}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
