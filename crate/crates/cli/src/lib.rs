//! Implementation of the `corrprune` command-line tool.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use corrprune_core::NetConfig;

pub mod commands;
pub mod format;
pub mod report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Data(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "corrprune",
    version,
    about = "Correspondence pruning and two-view geometry tools"
)]
pub struct Cli {
    /// Worker threads for per-pair processing (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of labeled pairs.
    Synth(SynthArgs),
    /// Run the pruning network and geometry back end on a dataset.
    Infer(InferArgs),
    /// Score predictions against a dataset.
    Eval(EvalArgs),
    /// Estimate with RANSAC, standalone or on the verified inliers of earlier predictions.
    Ransac(RansacArgs),
    /// Create and examine weight files.
    #[command(subcommand)]
    Weights(WeightsCommand),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene configuration (JSON); unspecified fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    /// Master seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_points: Option<usize>,
    #[arg(long)]
    pub outlier_ratio: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Weight file. Without it, weights are initialized from `--seed`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Network configuration (JSON); defaults to the full-size network.
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    /// Disable the visual branch.
    #[arg(long)]
    pub no_visual: bool,
    /// Replace network scores with the ground-truth inlier indicator.
    #[arg(long)]
    pub oracle_weights: bool,
    /// Seed for weight initialization when no weight file is given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Verification threshold on the epipolar residual.
    #[arg(long, default_value_t = corrprune_core::geometry::DEFAULT_VERIFY_TAU)]
    pub tau: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-pair rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct RansacArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Refine these predictions using only their verified correspondences.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = corrprune_core::geometry::DEFAULT_VERIFY_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum WeightsCommand {
    /// Write freshly initialized weights.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        net_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List the tensors of a weight file.
    Inspect {
        path: PathBuf,
        /// Check the file against this configuration.
        #[arg(long)]
        net_config: Option<PathBuf>,
    },
    /// Print the configuration hash.
    Hash {
        #[arg(long)]
        net_config: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command, writing
/// human-readable output to `out`.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send)) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            write!(out, "{}", e.render()).context("cannot write output")?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .context("cannot start worker pool")?;
    let result = pool.install(|| match &cli.command {
        Command::Synth(a) => commands::synth::run(a, out),
        Command::Infer(a) => commands::infer::run(a, out),
        Command::Eval(a) => commands::eval::run(a, out),
        Command::Ransac(a) => commands::ransac::run(a, out),
        Command::Weights(w) => commands::weights::run(w, out),
    });
    Ok(result?)
}

pub fn load_net_config(path: Option<&Path>) -> anyhow::Result<NetConfig> {
    let cfg: NetConfig = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid network config {}", p.display()))?
        }
        None => NetConfig::default(),
    };
    cfg.validate().context("invalid network config")?;
    Ok(cfg)
}
