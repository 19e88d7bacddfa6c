//! Command-line front end for `dnbcure`: simulate data, fit the cure rate
//! model, run Monte Carlo studies and bootstrap standard errors. Every
//! command writes a run manifest next to its output from which the run can
//! be replayed.

pub mod commands;
pub mod data;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dnbcure::{OptimizerConfig, Variant};
use serde::{Deserialize, Serialize};

pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "dnbcure",
    version,
    about = "Destructive negative-binomial cure rate model"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct GlobalOpts {
    /// Master seed (overrides the seed in a settings file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replicate and resample fits.
    #[arg(long, global = true, env = "DNBCURE_THREADS")]
    pub threads: Option<usize>,
    /// Relative-change convergence threshold.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Maximum number of iterations.
    #[arg(long, global = true)]
    pub kmax: Option<usize>,
    /// Armijo constant in (0, 0.5).
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
}

impl GlobalOpts {
    pub fn optimizer(&self, variant: Variant) -> OptimizerConfig {
        self.apply(OptimizerConfig::default().with_variant(variant))
    }

    /// Overlay the command-line overrides on `cfg`.
    pub fn apply(&self, mut cfg: OptimizerConfig) -> OptimizerConfig {
        if let Some(tol) = self.tol {
            cfg.tol = tol;
        }
        if let Some(k_max) = self.kmax {
            cfg.k_max = k_max;
        }
        if let Some(lambda) = self.lambda {
            cfg.lambda = lambda;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate one synthetic dataset from a settings file.
    Simulate(SimulateArgs),
    /// Fit the model to a CSV dataset.
    Fit(FitArgs),
    /// Monte Carlo bias/RMSE study.
    McStudy(McStudyArgs),
    /// Bootstrap standard errors for a fitted model.
    Bootstrap(BootstrapArgs),
    /// Rerun the command recorded in a run manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::McStudy(_) => "mc-study",
            Command::Bootstrap(_) => "bootstrap",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// JSON settings file.
    pub setting: PathBuf,
    /// Output CSV (`time,status,ulcer,thickness`).
    #[arg(long)]
    pub out: PathBuf,
    /// Truths sidecar; defaults to `<out>.truths.json`.
    #[arg(long)]
    pub truths_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Input CSV with `time` and `status` columns.
    pub data: PathBuf,
    /// Columns of the cure-probability link (an intercept is added).
    #[arg(long, value_delimiter = ',', default_value = "thickness")]
    pub p_covariates: Vec<String>,
    /// Columns of the risk-mean link (no intercept).
    #[arg(long, value_delimiter = ',', default_value = "ulcer")]
    pub eta_covariates: Vec<String>,
    /// Eta columns to expand into one indicator per level.
    #[arg(long, value_delimiter = ',')]
    pub eta_factors: Vec<String>,
    /// `auto`, or a JSON file holding a parameter vector (a truths file or a
    /// fit report also works).
    #[arg(long, default_value = "auto")]
    pub init: String,
    #[arg(long, default_value = "hz")]
    pub variant: Variant,
    /// Truths file; the report then includes estimate minus truth.
    #[arg(long)]
    pub truths: Option<PathBuf>,
    /// Output report (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct McStudyArgs {
    /// JSON settings file.
    pub setting: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "hz,fr,dy,sd")]
    pub variants: Vec<Variant>,
    /// Output table (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-replicate JSON with every estimate and start value.
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BootstrapArgs {
    /// The CSV that was fitted.
    pub data: PathBuf,
    /// Fit report produced by `fit`.
    pub fit_report: PathBuf,
    /// Number of resamples.
    #[arg(long = "B", short = 'B', default_value_t = 500)]
    pub b: usize,
    /// Output (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// A fully specified command line, as stored in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub global: GlobalOpts,
    pub command: Command,
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let invocation = Invocation {
        global: cli.global,
        command: cli.command,
    };
    match commands::dispatch(invocation) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
