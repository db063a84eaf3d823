//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error,
//! 3 verification-check failure when `--check` is set.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "warpcell",
    version,
    about = "Effective coefficients and residual statistics for randomly deformed periodic media"
)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: config `out_dir`, else the working
    /// directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for Monte Carlo loops (0 = one per core). Results are
    /// identical for any value.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Exit with code 3 if any verification check fails.
    #[arg(long, global = true)]
    check: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Effective 1D coefficient, cell-fluctuation variance and assumptions.
    Astar1d,
    /// Monte Carlo residual study: grid variances, rate fits, CLT probe.
    ResidualMc,
    /// Gaussian-shape check of the scaled kernel functional at one point.
    LimitCheck,
    /// Even-moment bound ratios of the windowed fluctuation.
    MomentCheck,
    /// Single-realization corrector solve with optional field dump.
    CorrectorNd,
    /// Effective-matrix convergence study over growing tori.
    AstarConvergence,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config PATH is required");
            return 2;
        }
    };
    let cfg = match config::RunConfig::from_file(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    warpcell::configure_workers(cli.workers);

    // The effective configuration echoed into summaries carries the seed
    // actually used.
    let mut effective = cfg.clone();
    effective.seed = seed;

    let start = Instant::now();
    let outcome = match cli.command {
        Command::Astar1d => commands::astar1d(&effective, seed, &out_dir),
        Command::ResidualMc => commands::residual_mc(&effective, seed, &out_dir),
        Command::LimitCheck => commands::limit_check(&effective, seed, &out_dir),
        Command::MomentCheck => commands::moment_check(&effective, seed, &out_dir),
        Command::CorrectorNd => commands::corrector_nd(&effective, seed, &out_dir),
        Command::AstarConvergence => commands::astar_convergence(&effective, seed, &out_dir),
    };
    // wall-clock timing is reported here, never inside output files, which
    // must be byte-identical across reruns
    eprintln!("completed in {:.3}s", start.elapsed().as_secs_f64());

    match outcome {
        Ok(all_pass) => {
            if cli.check && !all_pass {
                eprintln!("verification checks failed");
                3
            } else {
                0
            }
        }
        Err(commands::CmdError::Validation(msg)) => {
            eprintln!("configuration error: {msg}");
            2
        }
        Err(commands::CmdError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
