//! Replicated benchmark harness: runs a set of estimator configurations over
//! seeded replications of a simulated scenario and aggregates the eight
//! metrics into a table of means and standard errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_two_stage, ScoreKind, TuningGrid};
use crate::loss::LossSpec;
use crate::model::{CoefficientVector, Dataset, GroupStructure, WeightScheme};
use crate::penalty::PenaltySpec;
use crate::sim::{
    contaminate_covariate_entries, contaminate_covariates, generate_dataset, selection_metrics,
    ContaminationUnit, MetricsReport, SimConfig,
};
use crate::solver::SolverConfig;

/// Whether an estimator applies the hard-thresholding stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    OneStage,
    TwoStage,
}

/// Grouping used while fitting: the scenario's native groups, or one group
/// per coefficient (non-group baselines). Metrics are always computed against
/// the native structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Native,
    Singleton,
}

fn default_grouping() -> Grouping {
    Grouping::Native
}

/// One estimator column of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    pub loss: LossSpec,
    pub penalty: PenaltySpec,
    #[serde(default = "default_scheme")]
    pub scheme: WeightScheme,
    pub stage: Stage,
    #[serde(default = "default_grouping")]
    pub grouping: Grouping,
    /// Overrides the experiment-wide CV score for this method.
    #[serde(default)]
    pub score_kind: Option<ScoreKind>,
    /// Harness check: report the true coefficients instead of fitting.
    #[serde(default)]
    pub oracle: bool,
}

fn default_scheme() -> WeightScheme {
    WeightScheme::Unit
}

/// A complete benchmark specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub methods: Vec<MethodConfig>,
    pub grid: TuningGrid,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.methods.is_empty() {
            return Err(Error::validation("experiment needs at least one method"));
        }
        for m in &self.methods {
            m.loss.validate()?;
            m.penalty.validate()?;
            m.scheme.validate()?;
        }
        self.grid.validate(self.sim.n)?;
        self.solver.validate()?;
        Ok(())
    }
}

/// Aggregated metrics of one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: String,
    pub mean: MetricsReport,
    pub stderr: MetricsReport,
    /// Replications whose fit failed; their metrics are excluded.
    pub failures: usize,
    pub completed: usize,
}

/// Full benchmark output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub methods: Vec<MethodSummary>,
    pub replications: usize,
    /// (replication, method, message) for every recorded failure.
    pub failure_log: Vec<(usize, String, String)>,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// splitmix64 mixing for deriving independent sub-seeds.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every method on every seeded replication and aggregates the metrics.
/// Replications are independent jobs; the aggregation folds them in
/// replication order, so the report is identical for any worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let reps = cfg.sim.replications;
    let per_rep: Vec<Vec<std::result::Result<MetricsReport, String>>> = (0..reps)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<_>>()?;

    let mut methods = Vec::with_capacity(cfg.methods.len());
    let mut failure_log = Vec::new();
    for (mi, method) in cfg.methods.iter().enumerate() {
        let mut samples: Vec<[f64; 8]> = Vec::with_capacity(reps);
        let mut failures = 0;
        for (rep, row) in per_rep.iter().enumerate() {
            match &row[mi] {
                Ok(report) => samples.push(report.as_array()),
                Err(msg) => {
                    failures += 1;
                    failure_log.push((rep, method.name.clone(), msg.clone()));
                }
            }
        }
        let completed = samples.len();
        let mut mean = [0.0; 8];
        let mut stderr = [0.0; 8];
        if completed > 0 {
            for k in 0..8 {
                mean[k] = samples.iter().map(|s| s[k]).sum::<f64>() / completed as f64;
            }
            if completed > 1 {
                for k in 0..8 {
                    let var = samples
                        .iter()
                        .map(|s| (s[k] - mean[k]) * (s[k] - mean[k]))
                        .sum::<f64>()
                        / (completed - 1) as f64;
                    stderr[k] = (var / completed as f64).sqrt();
                }
            }
        }
        methods.push(MethodSummary {
            name: method.name.clone(),
            mean: MetricsReport::from_array(mean),
            stderr: MetricsReport::from_array(stderr),
            failures,
            completed,
        });
    }
    Ok(ExperimentReport {
        methods,
        replications: reps,
        failure_log,
    })
}

fn run_replication(
    cfg: &ExperimentConfig,
    rep: usize,
) -> Result<Vec<std::result::Result<MetricsReport, String>>> {
    let (mut dataset, truth) = generate_dataset(&cfg.sim, rep as u64)?;
    if let Some(contamination) = &cfg.sim.x_contamination {
        let seed = mix_seed(cfg.sim.seed, 0xC0A7 ^ rep as u64);
        dataset = match contamination.unit {
            ContaminationUnit::Rows => {
                contaminate_covariates(&dataset, contamination.fraction, seed)?
            }
            ContaminationUnit::Entries => {
                contaminate_covariate_entries(&dataset, contamination.fraction, seed)?
            }
        };
    }
    // one fold assignment per replication, shared by all methods so that
    // method comparisons are paired
    let cv_seed = mix_seed(cfg.sim.seed, 0xF01D ^ rep as u64);

    let mut out = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        out.push(run_method(cfg, method, &dataset, &truth, cv_seed));
    }
    Ok(out)
}

fn run_method(
    cfg: &ExperimentConfig,
    method: &MethodConfig,
    dataset: &Dataset,
    truth: &crate::model::GroundTruth,
    cv_seed: u64,
) -> std::result::Result<MetricsReport, String> {
    if method.oracle {
        return selection_metrics(truth.beta_star(), truth).map_err(|e| e.to_string());
    }
    let fitting_data = match method.grouping {
        Grouping::Native => dataset.clone(),
        Grouping::Singleton => {
            let singles = GroupStructure::singletons(dataset.num_coefficients())
                .map_err(|e| e.to_string())?;
            dataset.with_groups(singles).map_err(|e| e.to_string())?
        }
    };
    let mut grid = cfg.grid.clone();
    if method.stage == Stage::OneStage {
        grid = grid.without_thresholding();
    }
    if let Some(score) = method.score_kind {
        grid.score_kind = score;
    }
    let fit = fit_two_stage(
        &fitting_data,
        &method.scheme,
        method.loss,
        method.penalty,
        &grid,
        cfg.solver,
        cv_seed,
    )
    .map_err(|e| e.to_string())?;
    // metrics are judged against the native group structure regardless of
    // the structure used for fitting
    let estimate = CoefficientVector::new(
        fit.beta_final.values().clone(),
        truth.beta_star().groups().clone(),
    )
    .map_err(|e| e.to_string())?;
    selection_metrics(&estimate, truth).map_err(|e| e.to_string())
}
