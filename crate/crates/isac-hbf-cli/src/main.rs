//! Experiment harness for the cooperative beamforming designer: parses a
//! TOML scenario config, runs the distributed or centralized solver, and
//! writes CSV outputs (per-iteration diagnostics, beampatterns, parameter
//! sweeps, detection curves). Exit codes: 0 success, 1 I/O failure,
//! 2 configuration error, 3 infeasible pattern budget, 4 iteration cap hit
//! without meeting the residual tolerance.

use clap::{Parser, Subcommand};
use isac_hbf_cli::commands::{self, CliError, Context};
use isac_hbf_cli::config;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "isac-hbf",
    version,
    about = "Cooperative sensing-communication hybrid beamforming experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Scenario configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for output CSV files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the config's solver section.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker thread count (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// One solve: per-iteration diagnostics and per-transmitter beampatterns.
    Design,
    /// Rate versus a swept parameter over independent channel trials.
    Sweep,
    /// Analytic and Monte-Carlo detection curves for the designed beams.
    Roc,
    /// Monte-Carlo threshold calibration at the configured operating points.
    DetectMc,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads: must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let loaded = config::load(&path)?;
    let seed = cli.seed.unwrap_or(loaded.cfg.solver.seed);
    let ctx = Context { cfg: loaded.cfg, hash: loaded.hash_hex, out: cli.out, seed };
    match cli.command {
        Cmd::Design => commands::cmd_design(&ctx),
        Cmd::Sweep => commands::cmd_sweep(&ctx),
        Cmd::Roc => commands::cmd_roc(&ctx),
        Cmd::DetectMc => commands::cmd_detect_mc(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
