//! Residual loss catalog and the weighted empirical objective
//!
//! The objective averaged over observations is
//! `(1/n) sum_i w(x_i)/v(x_i) * l((y_i - x_i' beta) * v(x_i))`
//! with gradient `-(1/n) sum_i w(x_i) * l'((y_i - x_i' beta) * v(x_i)) * x_i`.
//! With unit weights both reduce to the plain unweighted M-estimation
//! objective through the same code path.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientVector, Dataset, WeightScheme};

/// Classical 95%-efficiency tuning for the Huber scale.
pub const HUBER_DEFAULT_ALPHA: f64 = 1.345;
/// Classical 95%-efficiency tuning for the Tukey biweight scale.
pub const TUKEY_DEFAULT_ALPHA: f64 = 4.685;
/// Classical 95%-efficiency tuning for the Cauchy scale.
pub const CAUCHY_DEFAULT_ALPHA: f64 = 2.3849;

/// Residual function selector. `alpha` is the scale of the robust losses;
/// least squares has no scale and an unbounded derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    LeastSquares,
    Huber { alpha: f64 },
    Tukey { alpha: f64 },
    Cauchy { alpha: f64 },
}

impl LossSpec {
    pub fn huber(alpha: f64) -> Result<Self> {
        check_scale(alpha)?;
        Ok(LossSpec::Huber { alpha })
    }

    pub fn tukey(alpha: f64) -> Result<Self> {
        check_scale(alpha)?;
        Ok(LossSpec::Tukey { alpha })
    }

    pub fn cauchy(alpha: f64) -> Result<Self> {
        check_scale(alpha)?;
        Ok(LossSpec::Cauchy { alpha })
    }

    pub fn huber_default() -> Self {
        LossSpec::Huber {
            alpha: HUBER_DEFAULT_ALPHA,
        }
    }

    pub fn tukey_default() -> Self {
        LossSpec::Tukey {
            alpha: TUKEY_DEFAULT_ALPHA,
        }
    }

    pub fn cauchy_default() -> Self {
        LossSpec::Cauchy {
            alpha: CAUCHY_DEFAULT_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::LeastSquares => Ok(()),
            LossSpec::Huber { alpha } | LossSpec::Tukey { alpha } | LossSpec::Cauchy { alpha } => {
                check_scale(alpha)
            }
        }
    }

    /// Bound on |l'|: alpha (Huber), 16*alpha/(25*sqrt(5)) (Tukey, attained at
    /// u = alpha/sqrt(5)), alpha/2 (Cauchy), infinite for least squares.
    pub fn derivative_bound(&self) -> f64 {
        match *self {
            LossSpec::LeastSquares => f64::INFINITY,
            LossSpec::Huber { alpha } => alpha,
            LossSpec::Tukey { alpha } => 16.0 * alpha / (25.0 * 5.0f64.sqrt()),
            LossSpec::Cauchy { alpha } => alpha / 2.0,
        }
    }

    /// Lipschitz constant of l'; equals 1 for every catalog loss (|l''| <= 1,
    /// attained at u = 0 for the robust losses).
    pub fn lipschitz_bound(&self) -> f64 {
        1.0
    }

    /// Whether the derivative bound is finite.
    pub fn is_robust(&self) -> bool {
        self.derivative_bound().is_finite()
    }

    /// (l(u), l'(u)); input assumed finite.
    pub fn value_and_deriv(&self, u: f64) -> (f64, f64) {
        match *self {
            LossSpec::LeastSquares => (0.5 * u * u, u),
            LossSpec::Huber { alpha } => {
                if u.abs() <= alpha {
                    (0.5 * u * u, u)
                } else {
                    (alpha * u.abs() - 0.5 * alpha * alpha, alpha * u.signum())
                }
            }
            LossSpec::Tukey { alpha } => {
                let plateau = alpha * alpha / 6.0;
                if u.abs() <= alpha {
                    let s = 1.0 - (u / alpha) * (u / alpha);
                    (plateau * (1.0 - s * s * s), u * s * s)
                } else {
                    (plateau, 0.0)
                }
            }
            LossSpec::Cauchy { alpha } => {
                let a2 = alpha * alpha;
                let value = 0.5 * a2 * (1.0 + u * u / a2).ln();
                let deriv = a2 * u / (a2 + u * u);
                (value, deriv)
            }
        }
    }
}

fn check_scale(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::validation(format!(
            "loss scale must be positive and finite, got {alpha}"
        )));
    }
    Ok(())
}

/// Evaluates `(l(u), l'(u))` for a finite residual.
pub fn loss_eval(spec: &LossSpec, u: f64) -> Result<(f64, f64)> {
    spec.validate()?;
    if !u.is_finite() {
        return Err(Error::validation(format!("residual must be finite, got {u}")));
    }
    Ok(spec.value_and_deriv(u))
}

pub(crate) fn compute_weights(dataset: &Dataset, scheme: &WeightScheme) -> (Array1<f64>, Array1<f64>) {
    let n = dataset.num_observations();
    let mut w = Array1::zeros(n);
    let mut v = Array1::zeros(n);
    for (i, row) in dataset.x().rows().into_iter().enumerate() {
        let (wi, vi) = scheme.eval(row);
        w[i] = wi;
        v[i] = vi;
    }
    (w, v)
}

/// Weighted empirical objective given precomputed per-observation weights.
pub(crate) fn objective_inner(
    x: &ndarray::ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    w: &ArrayView1<'_, f64>,
    v: &ArrayView1<'_, f64>,
    spec: &LossSpec,
    beta: &ArrayView1<'_, f64>,
) -> f64 {
    let n = x.nrows();
    let fitted = x.dot(beta);
    let mut total = 0.0;
    for i in 0..n {
        let r = (y[i] - fitted[i]) * v[i];
        let (val, _) = spec.value_and_deriv(r);
        total += w[i] / v[i] * val;
    }
    total / n as f64
}

/// Gradient of the weighted empirical objective; writes into `out`.
pub(crate) fn gradient_inner(
    x: &ndarray::ArrayView2<'_, f64>,
    y: &ArrayView1<'_, f64>,
    w: &ArrayView1<'_, f64>,
    v: &ArrayView1<'_, f64>,
    spec: &LossSpec,
    beta: &ArrayView1<'_, f64>,
    out: &mut Array1<f64>,
) {
    let n = x.nrows();
    let fitted = x.dot(beta);
    let mut scale = Array1::zeros(n);
    for i in 0..n {
        let r = (y[i] - fitted[i]) * v[i];
        let (_, deriv) = spec.value_and_deriv(r);
        scale[i] = w[i] * deriv;
    }
    let g = x.t().dot(&scale);
    let factor = -1.0 / n as f64;
    out.zip_mut_with(&g, |o, &gi| *o = factor * gi);
}

fn check_fit_inputs(dataset: &Dataset, scheme: &WeightScheme, spec: &LossSpec, beta: &CoefficientVector) -> Result<()> {
    scheme.validate()?;
    spec.validate()?;
    if beta.len() != dataset.num_coefficients() {
        return Err(Error::dimension(format!(
            "coefficients have length {} but the design has {} columns",
            beta.len(),
            dataset.num_coefficients()
        )));
    }
    Ok(())
}

/// Weighted empirical loss of `beta` on `dataset`.
pub fn objective(
    dataset: &Dataset,
    scheme: &WeightScheme,
    spec: &LossSpec,
    beta: &CoefficientVector,
) -> Result<f64> {
    check_fit_inputs(dataset, scheme, spec, beta)?;
    let (w, v) = compute_weights(dataset, scheme);
    let value = objective_inner(
        &dataset.x().view(),
        &dataset.y().view(),
        &w.view(),
        &v.view(),
        spec,
        &beta.values().view(),
    );
    if !value.is_finite() {
        return Err(Error::numerical("objective evaluated to a non-finite value"));
    }
    Ok(value)
}

/// Gradient of the weighted empirical loss at `beta`.
pub fn objective_gradient(
    dataset: &Dataset,
    scheme: &WeightScheme,
    spec: &LossSpec,
    beta: &CoefficientVector,
) -> Result<Array1<f64>> {
    check_fit_inputs(dataset, scheme, spec, beta)?;
    let (w, v) = compute_weights(dataset, scheme);
    let mut out = Array1::zeros(dataset.num_coefficients());
    gradient_inner(
        &dataset.x().view(),
        &dataset.y().view(),
        &w.view(),
        &v.view(),
        spec,
        &beta.values().view(),
        &mut out,
    );
    if out.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("gradient evaluated to a non-finite value"));
    }
    Ok(out)
}

/// Grid verification of the loss regularity conditions: bounded derivative
/// and Lipschitz-continuous derivative.
#[derive(Debug, Clone)]
pub struct LossAssumptionReport {
    /// Documented derivative bound k1 for the checked loss.
    pub derivative_bound: f64,
    /// Documented Lipschitz constant k2 for the checked loss.
    pub lipschitz_bound: f64,
    /// Largest |l'(u)| observed on the grid.
    pub max_abs_derivative: f64,
    /// Largest |l'(u) - l'(u')| - k2 |u - u'| over all grid pairs.
    pub max_lipschitz_excess: f64,
    /// |l'| <= k1 held on the grid (fails for least squares).
    pub bounded_derivative_ok: bool,
    /// The Lipschitz condition held on all grid pairs.
    pub lipschitz_ok: bool,
}

impl LossAssumptionReport {
    pub fn passed(&self) -> bool {
        self.bounded_derivative_ok && self.lipschitz_ok
    }
}

/// Checks the derivative bound and the Lipschitz condition on a uniform grid
/// over `[-grid_bound, grid_bound]`. Tolerance is 1e-9; least squares is
/// reported as failing the bound, which is its documented behavior.
pub fn verify_loss_assumptions(
    spec: &LossSpec,
    grid_bound: f64,
    grid_size: usize,
) -> Result<LossAssumptionReport> {
    spec.validate()?;
    if !(grid_bound > 0.0) || grid_size < 2 {
        return Err(Error::validation(
            "grid bound must be positive and grid size at least 2",
        ));
    }
    const TOL: f64 = 1e-9;
    let step = 2.0 * grid_bound / (grid_size - 1) as f64;
    let points: Vec<f64> = (0..grid_size).map(|i| -grid_bound + step * i as f64).collect();
    let derivs: Vec<f64> = points.iter().map(|&u| spec.value_and_deriv(u).1).collect();

    let k1 = spec.derivative_bound();
    let k2 = spec.lipschitz_bound();
    let max_abs_derivative = derivs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    // an infinite documented bound means the boundedness condition fails by
    // definition (least squares)
    let bounded_derivative_ok = k1.is_finite() && max_abs_derivative <= k1 + TOL;

    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..grid_size {
        for j in (i + 1)..grid_size {
            let excess = (derivs[i] - derivs[j]).abs() - k2 * (points[i] - points[j]).abs();
            if excess > max_excess {
                max_excess = excess;
            }
        }
    }
    Ok(LossAssumptionReport {
        derivative_bound: k1,
        lipschitz_bound: k2,
        max_abs_derivative,
        max_lipschitz_excess: max_excess,
        bounded_derivative_ok,
        lipschitz_ok: max_excess <= TOL,
    })
}
