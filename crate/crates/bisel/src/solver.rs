//! Composite gradient descent for the group-penalized M-estimation program
//!
//! The penalized objective `L_n(beta) + sum_j rho(||beta_j||, sqrt(d_j) lam)`
//! is split as `Lbar(beta) + sum_j sqrt(d_j) lam ||beta_j||` with
//! `Lbar = L_n - q_lam` smooth. Each iteration takes a gradient step on
//! `Lbar`, applies blockwise group soft-thresholding, enforces the l1-ball
//! side constraint, and backtracks the step size until the composite
//! sufficient-decrease condition holds. The solver also certifies first-order
//! stationarity of the returned point.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::loss::{self, LossSpec};
use crate::model::{norm2, CoefficientVector, Dataset, GroupStructure, WeightScheme};
use crate::penalty::{self, PenaltySpec};

/// Knobs of the composite gradient solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Radius of the l1-ball side constraint. A technical device for
    /// nonconvex programs; large enough to stay inactive at reasonable lam.
    pub l1_radius: f64,
    pub max_iters: usize,
    /// Stop when the relative change of the penalized objective falls below
    /// this (and the stationarity residual is within `tol_stat`).
    pub tol_obj: f64,
    /// First-order stationarity residual required to declare convergence.
    pub tol_stat: f64,
    pub eta_init: f64,
    /// Step-size shrink factor of the backtracking search, in (0, 1).
    pub eta_shrink: f64,
    /// Warm-start growth of the accepted step size for the next iteration.
    pub eta_grow: f64,
    /// Base seed for randomized helpers built on top of the solver; the
    /// iteration itself is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            l1_radius: 1e6,
            max_iters: 10_000,
            tol_obj: 1e-8,
            tol_stat: 1e-6,
            eta_init: 1.0,
            eta_shrink: 0.5,
            eta_grow: 2.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1_radius > 0.0) {
            return Err(Error::validation("l1 radius must be positive"));
        }
        if !(self.tol_obj > 0.0) || !(self.tol_stat > 0.0) {
            return Err(Error::validation("tolerances must be positive"));
        }
        if !(self.eta_init > 0.0) {
            return Err(Error::validation("initial step size must be positive"));
        }
        if !(self.eta_shrink > 0.0 && self.eta_shrink < 1.0) {
            return Err(Error::validation("eta_shrink must lie in (0, 1)"));
        }
        if !(self.eta_grow >= 1.0) {
            return Err(Error::validation("eta_grow must be at least 1"));
        }
        Ok(())
    }
}

/// Solution of one group-penalized fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: CoefficientVector,
    /// Penalized objective after each accepted step (first entry is the
    /// objective of the initializer). Nonincreasing up to 1e-12 slack.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stationarity_residual: f64,
    pub lam: f64,
    pub active_groups: BTreeSet<usize>,
    /// Objective trace of the warm-start stage when the fit was produced by
    /// the two-step procedure.
    pub warm_start_trace: Option<Vec<f64>>,
}

/// Slack applied to descent checks to absorb floating-point rounding.
const DESCENT_SLACK: f64 = 1e-12;
/// Maximum number of step-size halvings per line search.
const MAX_BACKTRACKS: usize = 60;

/// A fully specified group-penalized M-estimation program over one dataset.
pub struct GpProblem<'a> {
    dataset: &'a Dataset,
    xt: Array2<f64>,
    weights: Array1<f64>,
    vscale: Array1<f64>,
    loss: LossSpec,
    penalty: PenaltySpec,
    lam: f64,
    sqrt_d: Vec<f64>,
    config: SolverConfig,
}

impl<'a> GpProblem<'a> {
    pub fn new(
        dataset: &'a Dataset,
        scheme: &WeightScheme,
        loss: LossSpec,
        penalty: PenaltySpec,
        lam: f64,
        config: SolverConfig,
    ) -> Result<Self> {
        if lam == 0.0 && !matches!(loss, LossSpec::LeastSquares | LossSpec::Huber { .. }) {
            return Err(Error::validation(
                "lam = 0 with a nonconvex loss is only supported for restricted oracle fits",
            ));
        }
        Self::new_unchecked_lam(dataset, scheme, loss, penalty, lam, config)
    }

    fn new_unchecked_lam(
        dataset: &'a Dataset,
        scheme: &WeightScheme,
        loss: LossSpec,
        penalty: PenaltySpec,
        lam: f64,
        config: SolverConfig,
    ) -> Result<Self> {
        scheme.validate()?;
        loss.validate()?;
        penalty.validate()?;
        config.validate()?;
        if !(lam >= 0.0) || !lam.is_finite() {
            return Err(Error::validation(format!(
                "regularization level must be nonnegative and finite, got {lam}"
            )));
        }
        let (weights, vscale) = loss::compute_weights(dataset, scheme);
        let sqrt_d = dataset
            .groups()
            .sizes()
            .iter()
            .map(|&d| (d as f64).sqrt())
            .collect();
        Ok(GpProblem {
            dataset,
            xt: dataset.x().t().to_owned(),
            weights,
            vscale,
            loss,
            penalty,
            lam,
            sqrt_d,
            config,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn lam(&self) -> f64 {
        self.lam
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn groups(&self) -> &GroupStructure {
        self.dataset.groups()
    }

    /// Smooth part `Lbar(beta) = L_n(beta) - q_lam(beta)`.
    pub fn smooth_objective(&self, beta: &Array1<f64>) -> f64 {
        let mut fitted = Array1::zeros(self.dataset.num_observations());
        self.smooth_objective_into(beta, &mut fitted)
    }

    /// Same, writing the fitted values `X beta` into `fitted` for reuse by
    /// the gradient of the accepted candidate.
    fn smooth_objective_into(&self, beta: &Array1<f64>, fitted: &mut Array1<f64>) -> f64 {
        ndarray::linalg::general_mat_vec_mul(1.0, self.dataset.x(), beta, 0.0, fitted);
        let n = self.dataset.num_observations();
        let y = self.dataset.y().as_slice().expect("contiguous");
        let f = fitted.as_slice().expect("contiguous");
        let w = self.weights.as_slice().expect("contiguous");
        let v = self.vscale.as_slice().expect("contiguous");
        let mut total = 0.0;
        for i in 0..n {
            let r = (y[i] - f[i]) * v[i];
            total += w[i] / v[i] * self.loss.value_and_deriv(r).0;
        }
        total / n as f64 - self.q_total(beta)
    }

    fn q_total(&self, beta: &Array1<f64>) -> f64 {
        let b = beta.as_slice().expect("contiguous");
        let mut total = 0.0;
        for (j, r) in self.groups().ranges().enumerate() {
            let t = norm2(&b[r]);
            total += self.penalty.q_value_and_deriv(t, self.sqrt_d[j] * self.lam).0;
        }
        total
    }

    /// Convex group term `sum_j sqrt(d_j) lam ||beta_j||`.
    fn group_lasso_term(&self, beta: &Array1<f64>) -> f64 {
        let b = beta.as_slice().expect("contiguous");
        let mut total = 0.0;
        for (j, r) in self.groups().ranges().enumerate() {
            total += self.sqrt_d[j] * self.lam * norm2(&b[r]);
        }
        total
    }

    /// Full penalized objective `L_n(beta) + sum_j rho(||beta_j||, sqrt(d_j) lam)`.
    pub fn penalized_objective(&self, beta: &Array1<f64>) -> f64 {
        self.smooth_objective(beta) + self.group_lasso_term(beta)
    }

    /// Gradient of the smooth part, written into `out`.
    pub fn smooth_gradient(&self, beta: &Array1<f64>, out: &mut Array1<f64>) {
        let fitted = self.dataset.x().dot(beta);
        self.smooth_gradient_from_fitted(beta, &fitted, out);
    }

    fn smooth_gradient_from_fitted(
        &self,
        beta: &Array1<f64>,
        fitted: &Array1<f64>,
        out: &mut Array1<f64>,
    ) {
        let n = self.dataset.num_observations();
        let mut scale = Array1::zeros(n);
        {
            let y = self.dataset.y().as_slice().expect("contiguous");
            let f = fitted.as_slice().expect("contiguous");
            let w = self.weights.as_slice().expect("contiguous");
            let v = self.vscale.as_slice().expect("contiguous");
            let s = scale.as_slice_mut().expect("contiguous");
            for i in 0..n {
                let r = (y[i] - f[i]) * v[i];
                s[i] = w[i] * self.loss.value_and_deriv(r).1;
            }
        }
        let factor = -1.0 / n as f64;
        ndarray::linalg::general_mat_vec_mul(factor, &self.xt, &scale, 0.0, out);
        // subtract the q-correction blockwise
        let b = beta.as_slice().expect("contiguous");
        let o = out.as_slice_mut().expect("contiguous");
        for (j, r) in self.groups().ranges().enumerate() {
            let t = norm2(&b[r.clone()]);
            if t == 0.0 {
                continue;
            }
            let (_, qd) = self.penalty.q_value_and_deriv(t, self.sqrt_d[j] * self.lam);
            let s = qd / t;
            for (om, bm) in o[r.clone()].iter_mut().zip(&b[r]) {
                *om -= s * bm;
            }
        }
    }

    /// One composite step at step size `eta`: group soft-threshold of
    /// `beta - eta * grad` with per-group thresholds `lam * eta * sqrt(d_j)`,
    /// followed by the l1-ball rescale when the radius is exceeded.
    fn step_into(&self, beta: &Array1<f64>, grad: &Array1<f64>, eta: f64, out: &mut Array1<f64>) {
        let b = beta.as_slice().expect("contiguous");
        let g = grad.as_slice().expect("contiguous");
        {
            let o = out.as_slice_mut().expect("contiguous");
            for i in 0..b.len() {
                o[i] = b[i] - eta * g[i];
            }
        }
        for (j, r) in self.groups().ranges().enumerate() {
            let threshold = self.lam * eta * self.sqrt_d[j];
            penalty::group_soft_threshold_inplace(out.slice_mut(ndarray::s![r]), threshold);
        }
        let l1: f64 = out.iter().map(|v| v.abs()).sum();
        if l1 > self.config.l1_radius {
            let scale = self.config.l1_radius / l1;
            out.mapv_inplace(|v| v * scale);
        }
    }

    /// Public form of the composite iteration map at the given step size.
    pub fn composite_step(&self, beta: &CoefficientVector, eta: f64) -> Result<CoefficientVector> {
        if !(eta > 0.0) {
            return Err(Error::validation("step size must be positive"));
        }
        self.check_beta(beta)?;
        let mut grad = Array1::zeros(beta.len());
        self.smooth_gradient(beta.values(), &mut grad);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite gradient in composite step"));
        }
        let mut out = Array1::zeros(beta.len());
        self.step_into(beta.values(), &grad, eta, &mut out);
        CoefficientVector::new(out, beta.groups().clone())
    }

    fn check_beta(&self, beta: &CoefficientVector) -> Result<()> {
        if beta.len() != self.dataset.num_coefficients() {
            return Err(Error::dimension(format!(
                "coefficients have length {} but the design has {} columns",
                beta.len(),
                self.dataset.num_coefficients()
            )));
        }
        Ok(())
    }

    /// Backtracking line search from `eta_start`: shrinks the step until the
    /// candidate satisfies the composite sufficient-decrease condition
    /// `Lbar(c) <= Lbar(b) + <grad, c - b> + ||c - b||^2 / (2 eta)` and the
    /// penalized objective does not increase.
    pub fn backtracking_search(
        &self,
        beta: &CoefficientVector,
        eta_start: f64,
    ) -> Result<(f64, CoefficientVector)> {
        if !(eta_start > 0.0) {
            return Err(Error::validation("step size must be positive"));
        }
        self.check_beta(beta)?;
        let b = beta.values();
        let mut grad = Array1::zeros(b.len());
        self.smooth_gradient(b, &mut grad);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite gradient in line search"));
        }
        let f_smooth = self.smooth_objective(b);
        let f_pen = f_smooth + self.group_lasso_term(b);
        let mut cand = Array1::zeros(b.len());
        let mut cand_fitted = Array1::zeros(self.dataset.num_observations());
        let step = self.backtrack(b, &grad, f_smooth, f_pen, eta_start, &mut cand, &mut cand_fitted)?;
        Ok((
            step.eta,
            CoefficientVector::new(cand, beta.groups().clone())?,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn backtrack(
        &self,
        beta: &Array1<f64>,
        grad: &Array1<f64>,
        f_smooth: f64,
        f_pen: f64,
        eta_start: f64,
        cand: &mut Array1<f64>,
        cand_fitted: &mut Array1<f64>,
    ) -> Result<AcceptedStep> {
        let mut eta = eta_start;
        for _ in 0..=MAX_BACKTRACKS {
            self.step_into(beta, grad, eta, cand);
            if cand.as_slice() == beta.as_slice() {
                // fixpoint of the iteration map at this step size; no smaller
                // step can move either
                return Ok(AcceptedStep {
                    eta,
                    f_smooth,
                    f_pen,
                    moved: false,
                });
            }
            let f_smooth_cand = self.smooth_objective_into(cand, cand_fitted);
            if f_smooth_cand.is_finite() {
                let mut inner = 0.0;
                let mut dist2 = 0.0;
                let b = beta.as_slice().expect("contiguous");
                let g = grad.as_slice().expect("contiguous");
                let c = cand.as_slice().expect("contiguous");
                for i in 0..b.len() {
                    let d = c[i] - b[i];
                    inner += g[i] * d;
                    dist2 += d * d;
                }
                let slack = DESCENT_SLACK * f_smooth.abs().max(1.0);
                let rhs = f_smooth + inner + dist2 / (2.0 * eta) + slack;
                // the penalized objective must not increase at all; allowing
                // slack here lets the iterate bounce near stationary points
                // and floors the achievable stationarity residual
                if f_smooth_cand <= rhs {
                    let f_pen_cand = f_smooth_cand + self.group_lasso_term(cand);
                    if f_pen_cand <= f_pen {
                        return Ok(AcceptedStep {
                            eta,
                            f_smooth: f_smooth_cand,
                            f_pen: f_pen_cand,
                            moved: true,
                        });
                    }
                }
            }
            eta *= self.config.eta_shrink;
        }
        Err(Error::numerical(format!(
            "line search exceeded {MAX_BACKTRACKS} halvings (step-size underflow)"
        )))
    }

    /// First-order stationarity residual at `beta` given the smooth gradient:
    /// for active groups the norm of the blockwise KKT equation, for zero
    /// groups the excess of the gradient block norm over the threshold.
    pub fn stationarity_residual(&self, beta: &Array1<f64>, smooth_grad: &Array1<f64>) -> f64 {
        let b = beta.as_slice().expect("contiguous");
        let g = smooth_grad.as_slice().expect("contiguous");
        let mut worst = 0.0f64;
        for (j, r) in self.groups().ranges().enumerate() {
            let lamj = self.lam * self.sqrt_d[j];
            let t = norm2(&b[r.clone()]);
            let res = if t > 0.0 {
                let mut acc = 0.0;
                for (bm, gm) in b[r.clone()].iter().zip(&g[r.clone()]) {
                    let e = gm + lamj * bm / t;
                    acc += e * e;
                }
                acc.sqrt()
            } else {
                (norm2(&g[r]) - lamj).max(0.0)
            };
            worst = worst.max(res);
        }
        worst
    }

    /// Runs the composite gradient iteration from `init` until convergence
    /// (relative objective change below `tol_obj` and stationarity residual
    /// below `tol_stat`) or `max_iters`.
    pub fn solve(&self, init: &CoefficientVector) -> Result<FitResult> {
        self.check_beta(init)?;
        if init.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("initializer contains non-finite entries"));
        }
        if init.l1_norm() > self.config.l1_radius + 1e-9 {
            return Err(Error::validation(format!(
                "initializer violates the l1-ball constraint ({} > {})",
                init.l1_norm(),
                self.config.l1_radius
            )));
        }

        let n = self.dataset.num_observations();
        let mut beta = init.values().clone();
        let mut cand = Array1::zeros(beta.len());
        let mut grad = Array1::zeros(beta.len());
        let mut fitted = Array1::zeros(n);
        let mut cand_fitted = Array1::zeros(n);

        let mut f_smooth = self.smooth_objective_into(&beta, &mut fitted);
        if !f_smooth.is_finite() {
            return Err(Error::numerical("objective is non-finite at the initializer"));
        }
        let mut f_pen = f_smooth + self.group_lasso_term(&beta);
        let mut trace = vec![f_pen];

        self.smooth_gradient_from_fitted(&beta, &fitted, &mut grad);
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("gradient is non-finite at the initializer"));
        }
        let mut stat_res = self.stationarity_residual(&beta, &grad);
        let mut rel_change = f64::INFINITY;
        let mut eta = self.config.eta_init;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < self.config.max_iters {
            if rel_change < self.config.tol_obj && stat_res <= self.config.tol_stat {
                converged = true;
                break;
            }
            let step = self.backtrack(
                &beta,
                &grad,
                f_smooth,
                f_pen,
                eta,
                &mut cand,
                &mut cand_fitted,
            )?;
            iterations += 1;
            if !step.moved {
                // the iterate cannot be improved at any step size; repeating
                // the search would loop on the same state
                trace.push(f_pen);
                converged = stat_res <= self.config.tol_stat;
                break;
            }
            std::mem::swap(&mut beta, &mut cand);
            std::mem::swap(&mut fitted, &mut cand_fitted);
            rel_change = (f_pen - step.f_pen).abs() / f_pen.abs().max(1.0);
            f_smooth = step.f_smooth;
            f_pen = step.f_pen;
            trace.push(f_pen);
            self.smooth_gradient_from_fitted(&beta, &fitted, &mut grad);
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical("gradient became non-finite during descent"));
            }
            stat_res = self.stationarity_residual(&beta, &grad);
            eta = step.eta * self.config.eta_grow;
        }
        if !converged && rel_change < self.config.tol_obj && stat_res <= self.config.tol_stat {
            converged = true;
        }

        let beta_hat = CoefficientVector::new(beta, self.groups().clone())?;
        let active_groups = beta_hat.active_groups();
        Ok(FitResult {
            beta_hat,
            objective_trace: trace,
            iterations,
            converged,
            stationarity_residual: stat_res,
            lam: self.lam,
            active_groups,
            warm_start_trace: None,
        })
    }
}

struct AcceptedStep {
    eta: f64,
    f_smooth: f64,
    f_pen: f64,
    moved: bool,
}

/// Solves the group-penalized program at a fixed `lam` from `init`.
pub fn solve_gp(
    dataset: &Dataset,
    scheme: &WeightScheme,
    loss: LossSpec,
    penalty: PenaltySpec,
    lam: f64,
    init: &CoefficientVector,
    config: SolverConfig,
) -> Result<FitResult> {
    GpProblem::new(dataset, scheme, loss, penalty, lam, config)?.solve(init)
}

/// Two-step procedure: a Huber + group-Lasso run from zero produces the
/// initializer, then the requested program is solved from that point. The
/// returned fit is the second-stage result with the first-stage trace kept.
pub fn two_step_fit(
    dataset: &Dataset,
    scheme: &WeightScheme,
    loss: LossSpec,
    penalty: PenaltySpec,
    lam: f64,
    config: SolverConfig,
) -> Result<FitResult> {
    let zero = CoefficientVector::zeros(dataset.groups().clone());
    let step1 = GpProblem::new(
        dataset,
        scheme,
        LossSpec::huber_default(),
        PenaltySpec::Lasso,
        lam,
        config,
    )?
    .solve(&zero)?;
    let mut fit = GpProblem::new(dataset, scheme, loss, penalty, lam, config)?.solve(&step1.beta_hat)?;
    fit.warm_start_trace = Some(step1.objective_trace);
    Ok(fit)
}

/// Unpenalized M-estimation restricted to the given groups; coordinates
/// outside the support stay at zero. Degenerate problems surface as
/// `converged = false`, not as an error.
pub fn restricted_oracle_fit(
    dataset: &Dataset,
    scheme: &WeightScheme,
    loss: LossSpec,
    group_support: &BTreeSet<usize>,
    config: SolverConfig,
) -> Result<FitResult> {
    if group_support.is_empty() {
        return Err(Error::validation("restricted support must be nonempty"));
    }
    let groups = dataset.groups();
    if let Some(&j) = group_support.iter().find(|&&j| j >= groups.num_groups()) {
        return Err(Error::validation(format!(
            "support group {j} out of range (J = {})",
            groups.num_groups()
        )));
    }
    let mut columns = Vec::new();
    let mut sizes = Vec::new();
    for &j in group_support {
        columns.extend(groups.range(j));
        sizes.push(groups.size(j));
    }
    let restricted_x = dataset.x().select(ndarray::Axis(1), &columns);
    let restricted = Dataset::new(
        restricted_x,
        dataset.y().clone(),
        GroupStructure::new(sizes)?,
    )?;
    let problem = GpProblem::new_unchecked_lam(
        &restricted,
        scheme,
        loss,
        PenaltySpec::Lasso,
        0.0,
        config,
    )?;
    let zero = CoefficientVector::zeros(restricted.groups().clone());
    let fit = problem.solve(&zero)?;

    let mut full = Array1::zeros(dataset.num_coefficients());
    for (k, &m) in columns.iter().enumerate() {
        full[m] = fit.beta_hat.values()[k];
    }
    let beta_hat = CoefficientVector::new(full, groups.clone())?;
    let active_groups = beta_hat.active_groups();
    Ok(FitResult {
        beta_hat,
        objective_trace: fit.objective_trace,
        iterations: fit.iterations,
        converged: fit.converged,
        stationarity_residual: fit.stationarity_residual,
        lam: 0.0,
        active_groups,
        warm_start_trace: None,
    })
}
