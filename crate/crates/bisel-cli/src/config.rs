//! Run configuration: a flat JSON document mirroring the command-line flags.
//! Every field has a default; unknown keys are rejected.

use std::path::Path;

use bisel::{LossSpec, PenaltySpec, ScoreKind, SolverConfig, TuningGrid, WeightScheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Loss kind: "ls", "huber", "tukey" or "cauchy".
    pub loss: String,
    /// Loss scale; omitted means the per-loss 95%-efficiency default.
    pub alpha: Option<f64>,
    /// Penalty kind: "lasso" or "mcp".
    pub penalty: String,
    /// MCP shape parameter.
    pub mcp_b: f64,
    /// Observation weights: "unit" or "bounded:<c>".
    pub weights: String,
    /// Explicit lam grid; omitted means 8 log-spaced points on
    /// [0.01, 10] * sqrt(log(p)/n).
    pub lambda_grid: Option<Vec<f64>>,
    /// Explicit theta grid; omitted means 5 uniform points on [0.01, 0.5].
    pub theta_grid: Option<Vec<f64>>,
    pub folds: usize,
    pub trim: f64,
    /// CV score: "trimmed" or "mse".
    pub score: String,
    pub seed: u64,
    /// Overfitting guard: CV cells selecting more than this fraction of n
    /// are discarded. Off by default.
    pub max_support_frac: Option<f64>,
    pub max_iters: usize,
    pub tol_obj: f64,
    pub tol_stat: f64,
    pub l1_radius: f64,
    pub eta_init: f64,
    pub eta_shrink: f64,
    pub eta_grow: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        RunConfig {
            loss: "huber".into(),
            alpha: None,
            penalty: "mcp".into(),
            mcp_b: 3.0,
            weights: "unit".into(),
            lambda_grid: None,
            theta_grid: None,
            folds: 10,
            trim: 0.2,
            score: "trimmed".into(),
            seed: 0,
            max_support_frac: None,
            max_iters: solver.max_iters,
            tol_obj: solver.tol_obj,
            tol_stat: solver.tol_stat,
            l1_radius: solver.l1_radius,
            eta_init: solver.eta_init,
            eta_shrink: solver.eta_shrink,
            eta_grow: solver.eta_grow,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn loss_spec(&self) -> Result<LossSpec> {
        let spec = match (self.loss.as_str(), self.alpha) {
            ("ls", _) => LossSpec::LeastSquares,
            ("huber", None) => LossSpec::huber_default(),
            ("huber", Some(a)) => LossSpec::huber(a).map_err(|e| CliError::usage(e.to_string()))?,
            ("tukey", None) => LossSpec::tukey_default(),
            ("tukey", Some(a)) => LossSpec::tukey(a).map_err(|e| CliError::usage(e.to_string()))?,
            ("cauchy", None) => LossSpec::cauchy_default(),
            ("cauchy", Some(a)) => {
                LossSpec::cauchy(a).map_err(|e| CliError::usage(e.to_string()))?
            }
            (other, _) => {
                return Err(CliError::usage(format!(
                    "unknown loss '{other}' (expected ls|huber|tukey|cauchy)"
                )))
            }
        };
        Ok(spec)
    }

    pub fn penalty_spec(&self) -> Result<PenaltySpec> {
        match self.penalty.as_str() {
            "lasso" => Ok(PenaltySpec::Lasso),
            "mcp" => PenaltySpec::mcp(self.mcp_b).map_err(|e| CliError::usage(e.to_string())),
            other => Err(CliError::usage(format!(
                "unknown penalty '{other}' (expected lasso|mcp)"
            ))),
        }
    }

    pub fn weight_scheme(&self) -> Result<WeightScheme> {
        parse_weights(&self.weights)
    }

    pub fn score_kind(&self) -> Result<ScoreKind> {
        match self.score.as_str() {
            "mse" => Ok(ScoreKind::Mse),
            "trimmed" => Ok(ScoreKind::TrimmedMse),
            other => Err(CliError::usage(format!(
                "unknown score '{other}' (expected mse|trimmed)"
            ))),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let config = SolverConfig {
            l1_radius: self.l1_radius,
            max_iters: self.max_iters,
            tol_obj: self.tol_obj,
            tol_stat: self.tol_stat,
            eta_init: self.eta_init,
            eta_shrink: self.eta_shrink,
            eta_grow: self.eta_grow,
            seed: self.seed,
        };
        config
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
        Ok(config)
    }

    /// Tuning grid for a dataset of the given shape, with explicit grids
    /// taking precedence over the defaults.
    pub fn tuning_grid(&self, n: usize, p: usize) -> Result<TuningGrid> {
        let mut grid =
            TuningGrid::default_for(n, p).map_err(|e| CliError::usage(e.to_string()))?;
        if let Some(lams) = &self.lambda_grid {
            grid.lam_values = lams.clone();
        }
        if let Some(thetas) = &self.theta_grid {
            grid.theta_values = thetas.clone();
        }
        grid.folds = self.folds.min(n);
        grid.trim_frac = self.trim;
        grid.score_kind = self.score_kind()?;
        grid.max_support_frac = self.max_support_frac;
        grid.validate(n).map_err(|e| CliError::usage(e.to_string()))?;
        Ok(grid)
    }
}

pub fn parse_weights(text: &str) -> Result<WeightScheme> {
    if text == "unit" {
        return Ok(WeightScheme::Unit);
    }
    if let Some(c) = text.strip_prefix("bounded:") {
        let c: f64 = c
            .parse()
            .map_err(|_| CliError::usage(format!("bad weight cap in '{text}'")))?;
        return WeightScheme::bounded_inf_norm(c).map_err(|e| CliError::usage(e.to_string()));
    }
    Err(CliError::usage(format!(
        "unknown weights '{text}' (expected unit|bounded:<c>)"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        assert!(cfg.loss_spec().is_ok());
        assert!(cfg.penalty_spec().is_ok());
        assert!(cfg.weight_scheme().is_ok());
        assert!(cfg.solver_config().is_ok());
        assert!(cfg.tuning_grid(100, 50).is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let parsed: std::result::Result<RunConfig, _> =
            serde_json::from_str(r#"{"loss": "huber", "typo_key": 1}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn weight_parsing() {
        assert_eq!(parse_weights("unit").unwrap(), WeightScheme::Unit);
        assert_eq!(
            parse_weights("bounded:4").unwrap(),
            WeightScheme::BoundedInfNorm { c: 4.0 }
        );
        assert!(parse_weights("bounded:-1").is_err());
        assert!(parse_weights("bogus").is_err());
    }

    #[test]
    fn explicit_grids_override_defaults() {
        let cfg = RunConfig {
            lambda_grid: Some(vec![0.1, 0.2]),
            theta_grid: Some(vec![0.0, 0.4]),
            folds: 4,
            ..RunConfig::default()
        };
        let grid = cfg.tuning_grid(60, 30).unwrap();
        assert_eq!(grid.lam_values, vec![0.1, 0.2]);
        assert_eq!(grid.theta_values, vec![0.0, 0.4]);
        assert_eq!(grid.folds, 4);
    }
}
