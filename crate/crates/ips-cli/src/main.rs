//! `ips` — experiment driver for pure-jump particle systems on sparse
//! marked graphs. Everything is a pure function of the JSON config (plus
//! flag overrides): reruns are byte-identical, including across thread
//! counts.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "ips",
    about = "Simulator for interacting particle systems on sparse marked graphs",
    long_about = "Runs the experiment named in the JSON config (simulate, localize, percolate, \
hydro, corrdecay, nbhd, counterexample, dump-noise). Tabular results are CSV, trajectories are \
JSONL. All randomness derives from the config seed; identical configs give byte-identical outputs."
)]
struct Args {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the config replica count.
    #[arg(long)]
    replicas: Option<usize>,

    /// Worker threads (default: IPS_THREADS env var, then all cores).
    /// Results never depend on this.
    #[arg(long)]
    threads: Option<usize>,

    /// Output path (overrides config `out`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Dotted-path config overrides, e.g. --override model.lambda=2.0
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(args: &Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(config::ConfigError {
            field: "--config".into(),
            message: e.to_string(),
        })
    })?;
    let mut raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(config::ConfigError {
            field: "--config".into(),
            message: e.to_string(),
        })
    })?;
    config::apply_overrides(&mut raw, &args.overrides)?;
    let mut cfg = config::parse_config(raw)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(replicas) = args.replicas {
        cfg.replicas = Some(replicas);
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }

    let threads = args
        .threads
        .or_else(|| {
            std::env::var("IPS_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Run(e.to_string()))?;
    let outcome = pool.install(|| commands::run(&cfg))?;

    match &cfg.out {
        Some(path) => commands::write_artifact(path, &outcome.artifact)?,
        None => print!("{}", outcome.artifact),
    }
    println!("{}", outcome.summary);
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(CliError::Budget(m)) => {
            eprintln!("budget exhausted: {m}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
