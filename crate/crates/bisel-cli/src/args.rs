use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "bisel",
    version,
    about = "Robust bi-level variable selection for grouped regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the two-stage estimator on a CSV dataset and write reports
    Fit(FitArgs),
    /// Compute the cross-validation score table without a final refit
    Cv(FitArgs),
    /// Run a replicated simulation benchmark from an experiment config
    Simulate(SimulateArgs),
    /// Screen, spline-expand, fit, and evaluate repeated random holdouts
    Pipeline(PipelineArgs),
}

/// Estimator flags shared by the data-driven commands. Explicit flags
/// override values from `--config`.
#[derive(Debug, Args)]
pub struct CommonFlags {
    /// JSON run configuration; flags given here override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Loss: ls | huber | tukey | cauchy
    #[arg(long)]
    pub loss: Option<String>,
    /// Loss scale (defaults to the per-loss 95%-efficiency value)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Penalty: lasso | mcp
    #[arg(long)]
    pub penalty: Option<String>,
    /// MCP shape parameter b > 1
    #[arg(long = "mcp-b")]
    pub mcp_b: Option<f64>,
    /// Observation weights: unit | bounded:<c>
    #[arg(long)]
    pub weights: Option<String>,
    /// Comma-separated ascending regularization grid
    #[arg(long = "lambda-grid", value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Comma-separated ascending hard-threshold grid
    #[arg(long = "theta-grid", value_delimiter = ',')]
    pub theta_grid: Option<Vec<f64>>,
    /// Number of cross-validation folds
    #[arg(long)]
    pub folds: Option<usize>,
    /// Trimming fraction of the robust CV score
    #[arg(long)]
    pub trim: Option<f64>,
    /// CV score: trimmed | mse
    #[arg(long)]
    pub score: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score CV cells selecting more than this fraction of n as +inf
    #[arg(long = "max-support-frac")]
    pub max_support_frac: Option<f64>,
    /// Record wall-clock timings in run_meta.json (breaks byte-identical reruns)
    #[arg(long)]
    pub timings: bool,
}

impl CommonFlags {
    /// Config file (or defaults) with explicit flags layered on top.
    pub fn merged_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.loss {
            cfg.loss = v.clone();
        }
        if let Some(v) = self.alpha {
            cfg.alpha = Some(v);
        }
        if let Some(v) = &self.penalty {
            cfg.penalty = v.clone();
        }
        if let Some(v) = self.mcp_b {
            cfg.mcp_b = v;
        }
        if let Some(v) = &self.weights {
            cfg.weights = v.clone();
        }
        if let Some(v) = &self.lambda_grid {
            cfg.lambda_grid = Some(v.clone());
        }
        if let Some(v) = &self.theta_grid {
            cfg.theta_grid = Some(v.clone());
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(v) = self.trim {
            cfg.trim = v;
        }
        if let Some(v) = &self.score {
            cfg.score = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_support_frac {
            cfg.max_support_frac = Some(v);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column
    #[arg(long)]
    pub response: String,
    /// Two-column CSV `feature,group_id` assigning features to groups
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Assign features to consecutive equal blocks of this size instead
    #[arg(long = "auto-groups")]
    pub auto_groups: Option<usize>,
    /// Output directory (created if missing)
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub common: CommonFlags,
}

impl FitArgs {
    pub fn group_map(&self) -> Result<crate::data::GroupMap> {
        match (&self.groups, self.auto_groups) {
            (Some(path), None) => Ok(crate::data::GroupMap::Explicit(
                crate::data::load_group_map(path)?,
            )),
            (None, Some(size)) => Ok(crate::data::GroupMap::EqualBlocks(size)),
            (None, None) => Err(CliError::usage(
                "specify the grouping with --groups <csv> or --auto-groups <size>",
            )),
            (Some(_), Some(_)) => Err(CliError::usage(
                "--groups and --auto-groups are mutually exclusive",
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment configuration JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    /// Overrides the master seed from the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record wall-clock timings in run_meta.json
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column
    #[arg(long)]
    pub response: String,
    /// Keep this many columns by variance (default: all, capped at 2000)
    #[arg(long = "var-screen")]
    pub var_screen: Option<usize>,
    /// Then keep this many by |correlation| (default: capped at 500)
    #[arg(long = "corr-screen")]
    pub corr_screen: Option<usize>,
    /// Spline basis functions per kept column (one group each)
    #[arg(long = "n-basis", default_value_t = 5)]
    pub n_basis: usize,
    /// Test-set size of each random split
    #[arg(long, default_value_t = 6)]
    pub holdout: usize,
    /// Number of repeated random splits
    #[arg(long, default_value_t = 100)]
    pub splits: usize,
    /// Skip feature standardization and response centering
    #[arg(long = "no-standardize")]
    pub no_standardize: bool,
    /// Output directory (created if missing)
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub common: CommonFlags,
}
