//! Command-line front end for estimation runs, training runs, and sweeps.

use byzshield_core::config::{parse_config, ExperimentConfig};
use byzshield_core::error::Result;
use byzshield_core::runner::{error_envelope, resolve_out_dir, run_experiment};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "byzshield",
    version,
    about = "Semi-verified mean estimation and Byzantine-robust training simulation"
)]
struct Cli {
    /// Validate a config file and print its resolved form, then exit.
    #[arg(long, global = true, value_name = "PATH")]
    validate_config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; also settable via BYZSHIELD_OUT.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run semi-verified mean estimation replications.
    Estimate(RunArgs),
    /// Run distributed-training simulations.
    Train(RunArgs),
    /// Run a parameter sweep.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Parallel sweep cells.
        #[arg(long, value_name = "K")]
        jobs: Option<usize>,
    },
}

fn load(args: &RunArgs, expect_mode: &str) -> Result<ExperimentConfig> {
    let mut config = parse_config(&args.config)?;
    if config.mode() != expect_mode {
        return Err(byzshield_core::Error::Validation(format!(
            "config mode is '{}' but the '{expect_mode}' subcommand was used",
            config.mode()
        )));
    }
    if let Some(seed) = args.seed {
        config.set_master_seed(seed);
    }
    Ok(config)
}

fn execute(args: &RunArgs, expect_mode: &str, jobs: Option<usize>) -> Result<()> {
    let config = load(args, expect_mode)?;
    let out_dir = resolve_out_dir(args.out.as_deref(), &config);
    let artifacts = run_experiment(&config, &out_dir, jobs)?;
    for f in &artifacts.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(path) = &cli.validate_config {
        let config = parse_config(path)?;
        println!(
            "{}",
            serde_json::to_string_pretty(&config.to_json_value()).expect("serializable")
        );
        return Ok(());
    }
    match &cli.command {
        None => Err(byzshield_core::Error::Validation(
            "missing subcommand (estimate, train or sweep); see --help".into(),
        )),
        Some(Command::Estimate(args)) => execute(args, "estimate", None),
        Some(Command::Train(args)) => execute(args, "train", None),
        Some(Command::Sweep { run, jobs }) => execute(run, "sweep", *jobs),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_envelope(&err));
            ExitCode::FAILURE
        }
    }
}
