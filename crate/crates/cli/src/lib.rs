//! Command-line front-end: TOML configuration, CSV and SVG output.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
//! failure, 3 verification failure.

pub mod commands;
pub mod config;
pub mod output;
pub mod plots;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_ber, cmd_eh, cmd_transient, cmd_verify, cmd_verify_with, Outcome};
pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_VERIFY_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "rectenna", version, about = "Rectifier transient, link BER and harvesting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Output voltage over time for each configured load.
    Transient,
    /// Monte Carlo bit error rate curves.
    Ber,
    /// Average harvested power per symbol period.
    Eh,
    /// Closed form against the RK4 oracle.
    Verify,
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.emit_plots |= cli.plots;
    Ok(cfg)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, commands::RuntimeError> {
    match command {
        Command::Transient => cmd_transient(cfg),
        Command::Ber => cmd_ber(cfg),
        Command::Eh => cmd_eh(cfg),
        Command::Verify => cmd_verify(cfg),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    let cfg = match resolve_config(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_INVALID;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start workers: {e}");
            return EXIT_RUNTIME;
        }
    };
    let outcome = match pool.install(|| execute(cli.command, &cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    for line in &outcome.report {
        println!("{line}");
    }
    match output::write_atomic(&cfg.out_dir, &outcome.artifacts) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    }
    if outcome.verification_failed {
        EXIT_VERIFY_FAILED
    } else {
        EXIT_OK
    }
}
