//! Real-data preprocessing: variance/correlation pre-screening, cubic
//! B-spline group expansion, random holdout splitting, and feature
//! standardization.

use bisel::{Dataset, GroupStructure};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

/// Keeps the `n_by_variance` columns of largest sample variance, then among
/// those the `n_by_correlation` columns most correlated (in absolute value)
/// with the response. Ties break toward the earlier original column; the
/// returned indices are ascending. Constant candidate columns count as
/// correlation zero.
pub fn prescreen(
    x: &Array2<f64>,
    y: &Array1<f64>,
    n_by_variance: usize,
    n_by_correlation: usize,
) -> Result<Vec<usize>> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(CliError::data("pre-screening needs at least 2 rows"));
    }
    if y.len() != n {
        return Err(CliError::data("response length does not match the matrix"));
    }
    if !(n_by_correlation <= n_by_variance && n_by_variance <= p)
        || n_by_correlation == 0
    {
        return Err(CliError::usage(format!(
            "screen sizes must satisfy 0 < n_by_correlation <= n_by_variance <= p; \
             got {n_by_correlation} <= {n_by_variance} <= {p}"
        )));
    }
    let y_mean = y.sum() / n as f64;
    let y_sd = (y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    if y_sd == 0.0 {
        return Err(CliError::data("response is constant; correlation screen undefined"));
    }

    let mut means = vec![0.0; p];
    let mut vars = vec![0.0; p];
    for j in 0..p {
        let col = x.column(j);
        let m = col.sum() / n as f64;
        means[j] = m;
        vars[j] = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    }
    let by_variance = top_k(&(0..p).collect::<Vec<_>>(), &vars, n_by_variance);

    let mut corrs = vec![0.0; p];
    for &j in &by_variance {
        if vars[j] == 0.0 {
            continue;
        }
        let col = x.column(j);
        let cov = col
            .iter()
            .zip(y)
            .map(|(v, w)| (v - means[j]) * (w - y_mean))
            .sum::<f64>()
            / (n - 1) as f64;
        corrs[j] = (cov / (vars[j].sqrt() * y_sd)).abs();
    }
    let mut kept = top_k(&by_variance, &corrs, n_by_correlation);
    kept.sort_unstable();
    Ok(kept)
}

/// Indices of the `k` largest values among `candidates`, ties broken by the
/// smaller original index.
fn top_k(candidates: &[usize], values: &[f64], k: usize) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&i, &j| {
        values[j]
            .partial_cmp(&values[i])
            .expect("screen metrics are finite")
            .then(i.cmp(&j))
    });
    order.truncate(k);
    order
}

/// Degree of the spline basis used for group expansion.
const SPLINE_DEGREE: usize = 3;

/// Expands one column into an `n x n_basis` cubic B-spline basis matrix with
/// clamped boundary knots at the column min/max and interior knots at equally
/// spaced empirical quantiles. Rows sum to one. The expansion of one column
/// forms one group.
pub fn bspline_expand(column: &[f64], n_basis: usize) -> Result<Array2<f64>> {
    if n_basis < SPLINE_DEGREE + 1 {
        return Err(CliError::usage(format!(
            "cubic spline expansion needs at least {} basis functions, got {n_basis}",
            SPLINE_DEGREE + 1
        )));
    }
    if column.is_empty() {
        return Err(CliError::data("cannot expand an empty column"));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(CliError::data("cannot expand a column with non-finite values"));
    }
    let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(CliError::data("cannot expand a constant column"));
    }

    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_interior = n_basis - SPLINE_DEGREE - 1;
    let mut knots = vec![lo; SPLINE_DEGREE + 1];
    for i in 1..=n_interior {
        knots.push(quantile(&sorted, i as f64 / (n_interior + 1) as f64));
    }
    knots.extend(std::iter::repeat_n(hi, SPLINE_DEGREE + 1));

    let n = column.len();
    let mut out = Array2::zeros((n, n_basis));
    let mut values = [0.0; SPLINE_DEGREE + 1];
    for (i, &x) in column.iter().enumerate() {
        let span = find_span(&knots, n_basis, x);
        basis_funs(&knots, span, x, &mut values);
        for (r, &v) in values.iter().enumerate() {
            out[(i, span - SPLINE_DEGREE + r)] = v;
        }
    }
    Ok(out)
}

/// Linear-interpolation empirical quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let base = pos.floor() as usize;
    let frac = pos - base as f64;
    if base + 1 < n {
        sorted[base] + frac * (sorted[base + 1] - sorted[base])
    } else {
        sorted[n - 1]
    }
}

/// Knot span of `x`: the index `s` with `knots[s] <= x < knots[s+1]`, with
/// the right boundary clamped into the last nondegenerate span.
fn find_span(knots: &[f64], n_basis: usize, x: f64) -> usize {
    if x >= knots[n_basis] {
        return n_basis - 1;
    }
    if x <= knots[SPLINE_DEGREE] {
        return SPLINE_DEGREE;
    }
    let mut lo = SPLINE_DEGREE;
    let mut hi = n_basis;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Iterative triangular evaluation of the nonzero basis functions at `x`
/// (indices `span-degree ..= span`). Repeated knots yield 0/0 terms that are
/// defined as zero.
fn basis_funs(knots: &[f64], span: usize, x: f64, out: &mut [f64; SPLINE_DEGREE + 1]) {
    let mut left = [0.0; SPLINE_DEGREE + 1];
    let mut right = [0.0; SPLINE_DEGREE + 1];
    out[0] = 1.0;
    for j in 1..=SPLINE_DEGREE {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let den = right[r + 1] + left[j - r];
            let temp = if den == 0.0 { 0.0 } else { out[r] / den };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// Expands every listed column of `x` and stacks the bases side by side,
/// returning the expanded matrix and the group structure (one group of size
/// `n_basis` per column).
pub fn bspline_expand_matrix(
    x: &Array2<f64>,
    columns: &[usize],
    n_basis: usize,
) -> Result<(Array2<f64>, GroupStructure)> {
    if columns.is_empty() {
        return Err(CliError::usage("no columns selected for expansion"));
    }
    let n = x.nrows();
    let mut out = Array2::zeros((n, columns.len() * n_basis));
    for (k, &j) in columns.iter().enumerate() {
        let col: Vec<f64> = x.column(j).to_vec();
        let basis = bspline_expand(&col, n_basis)?;
        out.slice_mut(ndarray::s![.., k * n_basis..(k + 1) * n_basis])
            .assign(&basis);
    }
    let groups = GroupStructure::new(vec![n_basis; columns.len()])
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok((out, groups))
}

/// Uniform random disjoint train/test split, deterministic per seed; both
/// index lists come back sorted.
pub fn split_holdout(n: usize, holdout_size: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if holdout_size == 0 || holdout_size >= n {
        return Err(CliError::usage(format!(
            "holdout size must lie strictly between 0 and n = {n}; got {holdout_size}"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let mut test = rows[..holdout_size].to_vec();
    let mut train = rows[holdout_size..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Column-wise standardization (center, unit variance) fitted on training
/// data, plus the response mean used to re-center predictions. Constant
/// columns keep scale one.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub y_mean: f64,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Standardizer {
        let (n, p) = ds.x().dim();
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        for j in 0..p {
            let col = ds.x().column(j);
            let m = col.sum() / n as f64;
            means[j] = m;
            if n > 1 {
                let var =
                    col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
                if var > 0.0 {
                    scales[j] = var.sqrt();
                }
            }
        }
        let y_mean = ds.y().sum() / n as f64;
        Standardizer {
            means,
            scales,
            y_mean,
        }
    }

    /// Standardized copy: features centered and scaled, response centered.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let mut x = ds.x().clone();
        for j in 0..x.ncols() {
            let (m, s) = (self.means[j], self.scales[j]);
            x.column_mut(j).mapv_inplace(|v| (v - m) / s);
        }
        let y = ds.y().mapv(|v| v - self.y_mean);
        Dataset::new(x, y, ds.groups().clone()).map_err(|e| CliError::data(e.to_string()))
    }

    /// Prediction on raw rows: standardize, apply coefficients, add back the
    /// response mean.
    pub fn predict(&self, x: &Array2<f64>, beta: &Array1<f64>) -> Array1<f64> {
        let n = x.nrows();
        Array1::from_shape_fn(n, |i| {
            let mut acc = self.y_mean;
            for j in 0..x.ncols() {
                acc += (x[(i, j)] - self.means[j]) / self.scales[j] * beta[j];
            }
            acc
        })
    }
}
