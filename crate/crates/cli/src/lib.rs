//! Command-line front end: `simulate`, `fit`, `diagnose` and `features`.
//!
//! Every command resolves its settings from built-in defaults, then an
//! optional `--config` file, then explicit flags, and writes
//! `manifest.txt` into the output directory before doing any work. The
//! manifest is itself a valid config, so `--config out/manifest.txt`
//! reproduces the run.

pub mod commands;
pub mod config;
pub mod csvio;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{Config, RunManifest};

/// Failures of a command, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<lassomix::Error> for CliError {
    fn from(e: lassomix::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lassomix", version, about = "Mixtures of sparse t-regressions fitted by particle Gibbs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with known labels and inclusion pattern.
    Simulate(CommonArgs),
    /// Run the sampler on a dataset.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset CSV with header `y,x1,...,xp`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Summarise the samples written by `fit`.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        /// Output directory of a `fit` run.
        #[arg(long = "fit-dir")]
        fit_dir: Option<PathBuf>,
        /// Reference labels (`label` column, 1-based).
        #[arg(long = "truth-labels")]
        truth_labels: Option<PathBuf>,
        /// Reference inclusion table (`component,x1,...`).
        #[arg(long = "truth-gamma")]
        truth_gamma: Option<PathBuf>,
    },
    /// Turn a directory of price series into a regression dataset.
    Features {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of `date,price` CSV files, one per market.
        #[arg(long)]
        prices: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key = value` settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Number of mixture components.
    #[arg(long = "K")]
    pub k: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self, extra: &[(&str, Option<String>)]) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_deref().map(path_string)),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("burn_in", self.burn_in.map(|v| v.to_string())),
            ("thin", self.thin.map(|v| v.to_string())),
            ("particles", self.particles.map(|v| v.to_string())),
            ("K", self.k.map(|v| v.to_string())),
        ];
        for (key, value) in flags.iter().chain(extra) {
            if let Some(v) = value {
                cfg.set(key, v);
            }
        }
        Ok(cfg)
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

/// Parses arguments and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(common) => commands::simulate(common.resolve(&[])?),
        Command::Fit { common, data } => {
            commands::fit(common.resolve(&[("data", data.as_deref().map(path_string))])?)
        }
        Command::Diagnose {
            common,
            fit_dir,
            truth_labels,
            truth_gamma,
        } => commands::diagnose(common.resolve(&[
            ("fit_dir", fit_dir.as_deref().map(path_string)),
            ("truth_labels", truth_labels.as_deref().map(path_string)),
            ("truth_gamma", truth_gamma.as_deref().map(path_string)),
        ])?),
        Command::Features { common, prices } => {
            commands::features(common.resolve(&[("prices", prices.as_deref().map(path_string))])?)
        }
    }
}
