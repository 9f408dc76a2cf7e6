//! `sar2opt` — prepare data, train, translate, evaluate and refine SAR/optical
//! translators.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
//! 3 data error (unreadable, mis-shaped or unpaired inputs), 4 numerical
//! failure (non-finite loss or statistic).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod evaluate;
mod imaging;
mod prepare;
mod refine;
mod train;
mod translate;

use config::RunConfig;

/// A configuration problem detected before any work starts.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "sar2opt", version, about = "Two-way SAR <-> optical image translation")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, short, global = true, env = "SAR2OPT_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize, tile, pair and split co-registered rasters into a dataset.
    Prepare(prepare::Args),
    /// Train both translators and discriminators on a prepared dataset.
    Train(train::Args),
    /// Translate rasters of any size divisible by the network stride.
    Translate(translate::Args),
    /// Score a checkpoint on a dataset split (FID, PSNR, SSIM).
    Evaluate(evaluate::Args),
    /// Refine a pretrained checkpoint with unpaired cycle training.
    Refine(refine::Args),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use sar2opt_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<sar2opt_core::Error>() {
            return match e {
                E::Validation(_) | E::MissingPretrained(_) | E::Checkpoint(_) => EXIT_CONFIG,
                E::DegenerateInput(_)
                | E::Shape(_)
                | E::Pairing(_)
                | E::UnsupportedFormat(_)
                | E::Io { .. }
                | E::Npy(_) => EXIT_DATA,
                E::NonFinite(_) => EXIT_NUMERIC,
                E::External(_) | E::Tensor(_) | E::Json(_) => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Prepare(a) => prepare::run(a, cfg),
        Command::Train(a) => train::run(a, cfg),
        Command::Translate(a) => translate::run(a, cfg),
        Command::Evaluate(a) => evaluate::run(a, cfg),
        Command::Refine(a) => refine::run(a, cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
