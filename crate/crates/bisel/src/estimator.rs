//! The full two-stage estimator: group-penalized fit, elementwise hard
//! thresholding, and joint (lam, theta) selection by k-fold cross-validation
//! with a robust (trimmed) prediction score.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::model::{CoefficientVector, Dataset, WeightScheme};
use crate::penalty::PenaltySpec;
use crate::solver::{two_step_fit, FitResult, SolverConfig};

/// Cross-validation prediction score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Mse,
    TrimmedMse,
}

/// Two-dimensional (lam, theta) search grid and scoring policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningGrid {
    /// Candidate regularization levels, sorted ascending, all positive.
    pub lam_values: Vec<f64>,
    /// Candidate hard thresholds, sorted ascending, all nonnegative.
    pub theta_values: Vec<f64>,
    pub folds: usize,
    /// Fraction of the largest squared residuals discarded by the trimmed score.
    pub trim_frac: f64,
    pub score_kind: ScoreKind,
    /// When set, any CV cell whose fitted support exceeds this fraction of the
    /// sample size is scored +inf (real-data overfitting guard).
    pub max_support_frac: Option<f64>,
}

impl TuningGrid {
    /// Default desk-scale grid: 8 log-spaced lam values spanning
    /// `[0.01, 10] * sqrt(log(p)/n)`, 5 uniform theta values in `[0.01, 0.5]`,
    /// 10-fold CV (capped at n), trimming fraction 0.2.
    pub fn default_for(n: usize, p: usize) -> Result<Self> {
        if n < 2 || p < 2 {
            return Err(Error::validation(
                "default tuning grid requires at least 2 observations and 2 covariates",
            ));
        }
        let base = ((p as f64).ln() / n as f64).sqrt();
        Ok(TuningGrid {
            lam_values: log_spaced(0.01 * base, 10.0 * base, 8),
            theta_values: uniform_spaced(0.01, 0.5, 5),
            folds: 10.min(n),
            trim_frac: 0.2,
            score_kind: ScoreKind::TrimmedMse,
            max_support_frac: None,
        })
    }

    /// Same grid with hard thresholding disabled (one-stage estimators).
    pub fn without_thresholding(mut self) -> Self {
        self.theta_values = vec![0.0];
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lam_values.is_empty() || self.theta_values.is_empty() {
            return Err(Error::validation("tuning grids must be nonempty"));
        }
        if self.lam_values.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::validation("lam grid must be positive and finite"));
        }
        if self.theta_values.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::validation("theta grid must be nonnegative and finite"));
        }
        if self.lam_values.windows(2).any(|w| w[0] > w[1])
            || self.theta_values.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::validation("tuning grids must be sorted ascending"));
        }
        if self.folds < 2 || self.folds > n {
            return Err(Error::validation(format!(
                "fold count must lie in [2, n]; got {} with n = {n}",
                self.folds
            )));
        }
        if !(self.trim_frac >= 0.0 && self.trim_frac < 0.5) {
            return Err(Error::validation("trim fraction must lie in [0, 0.5)"));
        }
        if let Some(f) = self.max_support_frac {
            if !(f > 0.0) {
                return Err(Error::validation("max support fraction must be positive"));
            }
        }
        Ok(())
    }
}

pub(crate) fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (llo + (lhi - llo) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

pub(crate) fn uniform_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

/// Elementwise hard thresholding; entries with `|beta_m| >= theta` are kept
/// (boundary included), everything else becomes exactly zero.
pub fn hard_threshold(beta: &CoefficientVector, theta: f64) -> Result<CoefficientVector> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::validation(format!(
            "threshold must be nonnegative and finite, got {theta}"
        )));
    }
    let values = beta
        .values()
        .mapv(|v| if v.abs() >= theta { v } else { 0.0 });
    CoefficientVector::new(values, beta.groups().clone())
}

/// Prediction error of held-out residuals: plain mean squared error, or the
/// trimmed variant that sorts the squared residuals and discards the largest
/// `ceil(trim_frac * m)` of them (never all) before averaging.
pub fn prediction_score(residuals: &[f64], kind: ScoreKind, trim_frac: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::validation("cannot score an empty residual vector"));
    }
    if !(0.0..0.5).contains(&trim_frac) {
        return Err(Error::validation("trim fraction must lie in [0, 0.5)"));
    }
    let mut squared: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    let kept = match kind {
        ScoreKind::Mse => squared.len(),
        ScoreKind::TrimmedMse => {
            let m = squared.len();
            let drop = ((trim_frac * m as f64).ceil() as usize).min(m - 1);
            // with nothing to drop, keep the plain-MSE summation order so
            // the two scores agree exactly
            if drop > 0 {
                squared.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
            m - drop
        }
    };
    Ok(squared[..kept].iter().sum::<f64>() / kept as f64)
}

/// Deterministic seeded fold assignment: a shuffle of `0..n` dealt into
/// `folds` consecutive blocks of size `n/folds` or `n/folds + 1`.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(rows[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Cross-validation outcome: the selected pair and the full score table.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub lam: f64,
    pub theta: f64,
    pub table: CvTable,
}

/// Mean held-out scores indexed by (lam, theta).
#[derive(Debug, Clone)]
pub struct CvTable {
    pub lam_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    /// `scores[(l, t)]` is the mean score of `(lam_values[l], theta_values[t])`.
    pub scores: Array2<f64>,
}

impl CvTable {
    pub fn cell(&self, lam_idx: usize, theta_idx: usize) -> f64 {
        self.scores[(lam_idx, theta_idx)]
    }
}

/// Selects `(lam, theta)` by k-fold cross-validation of the two-step fit.
///
/// Each (fold, lam) pair is fitted once; every theta is then scored for free
/// on the held-out part. Cell scores are fold means with non-finite values
/// propagated as +inf. Ties are broken toward the largest lam, then the
/// largest theta (the sparsest model).
pub fn cross_validate(
    dataset: &Dataset,
    scheme: &WeightScheme,
    loss: LossSpec,
    penalty: PenaltySpec,
    grid: &TuningGrid,
    config: SolverConfig,
    seed: u64,
) -> Result<CvOutcome> {
    let n = dataset.num_observations();
    grid.validate(n)?;
    scheme.validate()?;
    loss.validate()?;
    penalty.validate()?;
    config.validate()?;

    let folds = assign_folds(n, grid.folds, seed);
    if folds.iter().any(|f| f.is_empty()) {
        return Err(Error::validation("a CV fold has zero rows"));
    }
    let splits: Vec<(Dataset, Vec<usize>)> = folds
        .iter()
        .map(|test_rows| {
            let train_rows: Vec<usize> =
                (0..n).filter(|r| !test_rows.contains(r)).collect();
            Ok((dataset.subset_rows(&train_rows)?, test_rows.clone()))
        })
        .collect::<Result<_>>()?;

    let n_lam = grid.lam_values.len();
    let n_theta = grid.theta_values.len();
    let support_cap = grid.max_support_frac.map(|f| f * n as f64);

    // (fold, lam) cells are independent jobs; collecting preserves job order
    // so the reduction is identical for any worker count.
    let jobs: Vec<(usize, usize)> = (0..grid.folds)
        .flat_map(|f| (0..n_lam).map(move |l| (f, l)))
        .collect();
    let cell_scores: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(f, l)| {
            let (train, test_rows) = &splits[f];
            let lam = grid.lam_values[l];
            // inputs are validated upfront, so a failure here is a numerical
            // one (divergence, step underflow); it poisons the cell
            let fit = match two_step_fit(train, scheme, loss, penalty, lam, config) {
                Ok(fit) => fit,
                Err(_) => return vec![f64::INFINITY; n_theta],
            };
            let mut out = Vec::with_capacity(n_theta);
            for &theta in &grid.theta_values {
                let thresholded = hard_threshold(&fit.beta_hat, theta)
                    .expect("theta validated nonnegative");
                if let Some(cap) = support_cap {
                    if thresholded.support().len() as f64 > cap {
                        out.push(f64::INFINITY);
                        continue;
                    }
                }
                let residuals: Vec<f64> = test_rows
                    .iter()
                    .map(|&r| {
                        dataset.y()[r]
                            - dataset.x().row(r).dot(&thresholded.values().view())
                    })
                    .collect();
                let score = prediction_score(&residuals, grid.score_kind, grid.trim_frac)
                    .unwrap_or(f64::INFINITY);
                out.push(if score.is_finite() { score } else { f64::INFINITY });
            }
            out
        })
        .collect();

    let mut scores = Array2::zeros((n_lam, n_theta));
    for l in 0..n_lam {
        for t in 0..n_theta {
            let mut acc = 0.0;
            for f in 0..grid.folds {
                acc += cell_scores[f * n_lam + l][t];
            }
            let mean = acc / grid.folds as f64;
            scores[(l, t)] = if mean.is_finite() { mean } else { f64::INFINITY };
        }
    }

    // argmin with ties resolved toward the sparsest model: iterating in
    // ascending (lam, theta) order and replacing on <= keeps the largest pair
    let mut best = (0usize, 0usize);
    let mut best_score = f64::INFINITY;
    for l in 0..n_lam {
        for t in 0..n_theta {
            if scores[(l, t)] <= best_score {
                best_score = scores[(l, t)];
                best = (l, t);
            }
        }
    }
    Ok(CvOutcome {
        lam: grid.lam_values[best.0],
        theta: grid.theta_values[best.1],
        table: CvTable {
            lam_values: grid.lam_values.clone(),
            theta_values: grid.theta_values.clone(),
            scores,
        },
    })
}

/// Result of the full two-stage procedure with tuning.
#[derive(Debug, Clone)]
pub struct TwoStageResult {
    /// Stage-one (group-penalized) coefficients at the selected lam.
    pub beta_gp: CoefficientVector,
    /// Final coefficients after hard thresholding at the selected theta.
    pub beta_final: CoefficientVector,
    pub lam_selected: f64,
    pub theta_selected: f64,
    pub cv_table: CvTable,
    pub gp_fit: FitResult,
}

/// Cross-validates, refits on the full data at the selected lam, and applies
/// the hard threshold at the selected theta.
pub fn fit_two_stage(
    dataset: &Dataset,
    scheme: &WeightScheme,
    loss: LossSpec,
    penalty: PenaltySpec,
    grid: &TuningGrid,
    config: SolverConfig,
    seed: u64,
) -> Result<TwoStageResult> {
    let cv = cross_validate(dataset, scheme, loss, penalty, grid, config, seed)?;
    let fit = two_step_fit(dataset, scheme, loss, penalty, cv.lam, config)?;
    let beta_final = hard_threshold(&fit.beta_hat, cv.theta)?;
    Ok(TwoStageResult {
        beta_gp: fit.beta_hat.clone(),
        beta_final,
        lam_selected: cv.lam,
        theta_selected: cv.theta,
        cv_table: cv.table,
        gp_fit: fit,
    })
}
