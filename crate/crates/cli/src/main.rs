//! `alphamod` — mixed-norm alpha-modulation space toolkit.
//!
//! Exit codes: 0 success, 1 asserted check failed, 2 configuration or
//! input error, 3 resource guard (quadrature cost, sweep size).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alphamod::Error;
use commands::Outcome;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "alphamod",
    about = "Mixed-norm alpha-modulation spaces: coverings, norms, operators, experiments"
)]
struct Cli {
    /// Run configuration (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Input field file (norm, apply).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Report format; overrides `output.formats`.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,

    /// Worker threads for experiment parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the covering and partition of unity; run admissibility checks.
    BapuCheck,
    /// Modulation norm and band profile of an input field.
    Norm,
    /// Apply the configured symbol to an input field.
    Apply,
    /// Run one ratio experiment and assert its committed criterion.
    Verify,
    /// Run an experiment over a cartesian sweep of space parameters.
    Sweep,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::CostGuard(_) => 3,
        Error::Parse(_) | Error::InvalidParam(_) | Error::GridMismatch(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(dir) = &cli.output {
        cfg.output_dir = dir.clone();
    }
    if let Some(fmt) = &cli.format {
        cfg.formats = vec![match fmt.as_str() {
            "json" => config::Format::Json,
            _ => config::Format::Csv,
        }];
    }
    Ok(cfg)
}

fn require_input(cli: &Cli) -> Result<PathBuf, Error> {
    cli.input
        .clone()
        .ok_or_else(|| Error::InvalidParam("this subcommand needs --input FIELD_FILE".into()))
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    if let Some(jobs) = cli.jobs {
        // Ignore a second initialization (e.g. library defaults already used).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let cfg = load_config(cli)?;
    match cli.command {
        Command::BapuCheck => commands::cmd_bapu_check(&cfg),
        Command::Norm => commands::cmd_norm(&cfg, &require_input(cli)?),
        Command::Apply => commands::cmd_apply(&cfg, &require_input(cli)?),
        Command::Verify => commands::cmd_verify(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
