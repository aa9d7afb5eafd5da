//! Synthetic scenario generation: block covariance designs, heavy-tailed
//! error distributions, covariate contamination, and the eight
//! selection/estimation metrics.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientVector, Dataset, GroundTruth, GroupStructure};

/// Degrees of freedom of the chi-square contamination draws.
pub const CONTAMINATION_DF: f64 = 10.0;

/// Random error distribution of the simulated linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorKind {
    Gaussian,
    /// Student-t with one degree of freedom (standard Cauchy), generated as a
    /// ratio of standard normals so every platform draws the same stream.
    T1,
    /// Standard normal with probability `p_normal`, standard Cauchy otherwise,
    /// independently per observation.
    MixCauchy { p_normal: f64 },
}

impl ErrorKind {
    pub fn mix_cauchy_default() -> Self {
        ErrorKind::MixCauchy { p_normal: 0.7 }
    }

    pub fn validate(&self) -> Result<()> {
        if let ErrorKind::MixCauchy { p_normal } = *self {
            if !(0.0..=1.0).contains(&p_normal) {
                return Err(Error::validation(format!(
                    "mixture weight must lie in [0, 1], got {p_normal}"
                )));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            // gaussian shares the mixture code path with p_normal = 1 so the
            // degenerate mixture is bitwise identical to it
            ErrorKind::Gaussian => sample_mixture(1.0, rng),
            ErrorKind::T1 => sample_cauchy(rng),
            ErrorKind::MixCauchy { p_normal } => sample_mixture(p_normal, rng),
        }
    }
}

fn sample_mixture(p_normal: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    if u < p_normal {
        StandardNormal.sample(rng)
    } else {
        sample_cauchy(rng)
    }
}

fn sample_cauchy(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let num: f64 = StandardNormal.sample(rng);
        let den: f64 = StandardNormal.sample(rng);
        if den != 0.0 {
            return num / den;
        }
    }
}

/// How covariate contamination replaces values: whole rows or independently
/// chosen matrix entries (a sensitivity-analysis variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationUnit {
    Rows,
    Entries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contamination {
    pub fraction: f64,
    #[serde(default = "default_contamination_unit")]
    pub unit: ContaminationUnit,
}

fn default_contamination_unit() -> ContaminationUnit {
    ContaminationUnit::Rows
}

/// Full description of one simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub group_sizes: Vec<usize>,
    /// Within-group correlation magnitude, in (0, 1).
    pub a: f64,
    /// Between-group attenuation, in (0, 1).
    pub b: f64,
    /// Coefficient magnitudes of the leading groups; remaining groups are
    /// zero. Signs alternate per coefficient index.
    pub beta_star: Vec<Vec<f64>>,
    pub error_kind: ErrorKind,
    #[serde(default)]
    pub x_contamination: Option<Contamination>,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let groups = GroupStructure::new(self.group_sizes.clone())?;
        if self.n == 0 {
            return Err(Error::validation("need at least one observation"));
        }
        if !(self.a > 0.0 && self.a < 1.0) || !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::validation(
                "correlation parameters must lie strictly in (0, 1)",
            ));
        }
        if self.beta_star.len() > groups.num_groups() {
            return Err(Error::validation(
                "more coefficient blocks than groups in beta_star",
            ));
        }
        for (j, block) in self.beta_star.iter().enumerate() {
            if block.len() != groups.size(j) {
                return Err(Error::validation(format!(
                    "beta_star block {j} has length {} but group {j} has size {}",
                    block.len(),
                    groups.size(j)
                )));
            }
            if block.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::validation(
                    "beta_star magnitudes must be nonnegative and finite",
                ));
            }
        }
        self.error_kind.validate()?;
        if let Some(c) = &self.x_contamination {
            if !(0.0..1.0).contains(&c.fraction) {
                return Err(Error::validation("contamination fraction must lie in [0, 1)"));
            }
        }
        if self.replications == 0 {
            return Err(Error::validation("need at least one replication"));
        }
        Ok(())
    }

    pub fn groups(&self) -> Result<GroupStructure> {
        GroupStructure::new(self.group_sizes.clone())
    }

    /// True coefficient vector: magnitudes from `beta_star` with signs
    /// alternating per coefficient index (+, -, +, ...).
    pub fn truth(&self) -> Result<GroundTruth> {
        let groups = self.groups()?;
        let mut values = Array1::zeros(groups.num_coefficients());
        for (j, block) in self.beta_star.iter().enumerate() {
            for (offset, &mag) in groups.range(j).zip(block) {
                let sign = if offset % 2 == 0 { 1.0 } else { -1.0 };
                values[offset] = sign * mag;
            }
        }
        Ok(GroundTruth::from_beta(CoefficientVector::new(values, groups)?))
    }
}

/// Block covariance of the simulated designs: unit diagonal,
/// `(-1)^(i+j) a` within a group and `(-1)^(i+j) a b` across groups
/// (indices 1-based as usual in the display; parity is what matters).
/// Positive definiteness is verified by a Cholesky factorization.
pub fn make_block_covariance(groups: &GroupStructure, a: f64, b: f64) -> Result<Array2<f64>> {
    if !(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 1.0) {
        return Err(Error::validation(
            "correlation parameters must lie strictly in (0, 1)",
        ));
    }
    let p = groups.num_coefficients();
    let group_of: Vec<usize> = (0..p).map(|m| groups.group_of(m)).collect();
    let mut sigma = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            sigma[(i, j)] = if i == j {
                1.0
            } else {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let base = if group_of[i] == group_of[j] { a } else { a * b };
                sign * base
            };
        }
    }
    cholesky_lower(&sigma)?;
    Ok(sigma)
}

/// Plain Cholesky factorization; fails with a diagnostic when the matrix is
/// not positive definite.
pub(crate) fn cholesky_lower(m: &Array2<f64>) -> Result<Array2<f64>> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::dimension("matrix must be square".to_string()));
    }
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::numerical(format!(
                        "matrix is not positive definite (pivot {acc:.3e} at {i})"
                    )));
                }
                l[(i, j)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Draws one replication of the scenario: rows of X are i.i.d. N(0, Sigma),
/// errors follow the configured distribution, y = X beta* + eps.
/// Deterministic given `(cfg.seed, rep_seed)`.
pub fn generate_dataset(cfg: &SimConfig, rep_seed: u64) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let groups = cfg.groups()?;
    let p = groups.num_coefficients();
    let sigma = make_block_covariance(&groups, cfg.a, cfg.b)?;
    let factor = cholesky_lower(&sigma)?;
    let truth = cfg.truth()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep_seed);

    // draw order is fixed: all of Z row-major, then the n errors
    let z = Array2::from_shape_fn((cfg.n, p), |_| StandardNormal.sample(&mut rng));
    let x = z.dot(&factor.t());
    let eps = Array1::from_shape_fn(cfg.n, |_| cfg.error_kind.sample(&mut rng));
    let y = x.dot(truth.beta_star().values()) + &eps;

    let dataset = Dataset::new(x, y, groups)?;
    Ok((dataset, truth))
}

/// Replaces all covariate entries of a uniformly chosen `floor(fraction * n)`
/// rows with independent chi-square(10) draws recentered by the theoretical
/// mean 10. The response is untouched.
pub fn contaminate_covariates(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::validation("contamination fraction must lie in [0, 1)"));
    }
    let n = dataset.num_observations();
    let count = (fraction * n as f64).floor() as usize;
    let mut x = dataset.x().clone();
    if count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = sample_without_replacement(n, count, &mut rng);
        let chi = ChiSquared::new(CONTAMINATION_DF).expect("valid df");
        for &r in &rows {
            for m in 0..dataset.num_coefficients() {
                x[(r, m)] = chi.sample(&mut rng) - CONTAMINATION_DF;
            }
        }
    }
    Dataset::new(x, dataset.y().clone(), dataset.groups().clone())
}

/// Entry-level contamination variant: `floor(fraction * n * p)` individual
/// matrix entries drawn without replacement are replaced the same way.
pub fn contaminate_covariate_entries(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::validation("contamination fraction must lie in [0, 1)"));
    }
    let n = dataset.num_observations();
    let p = dataset.num_coefficients();
    let count = (fraction * (n * p) as f64).floor() as usize;
    let mut x = dataset.x().clone();
    if count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = sample_without_replacement(n * p, count, &mut rng);
        let chi = ChiSquared::new(CONTAMINATION_DF).expect("valid df");
        for &c in &cells {
            x[(c / p, c % p)] = chi.sample(&mut rng) - CONTAMINATION_DF;
        }
    }
    Dataset::new(x, dataset.y().clone(), dataset.groups().clone())
}

/// First `count` elements of a seeded partial Fisher-Yates shuffle of `0..n`,
/// returned in ascending order.
fn sample_without_replacement(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    debug_assert!(count <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for k in 0..count {
        let swap = k + rng.random_range(0..n - k);
        pool.swap(k, swap);
    }
    let mut picked = pool[..count].to_vec();
    picked.sort_unstable();
    picked
}

/// The eight evaluation metrics: estimation errors, model/group sizes, and
/// false positive/negative rates at both selection levels (percentages).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub l2_error: f64,
    pub l1_error: f64,
    /// Number of selected covariates |I_hat|.
    pub model_size: f64,
    /// Number of selected groups |S_hat|.
    pub group_size: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub gfpr: f64,
    pub gfnr: f64,
}

impl MetricsReport {
    pub(crate) fn as_array(&self) -> [f64; 8] {
        [
            self.l2_error,
            self.l1_error,
            self.model_size,
            self.group_size,
            self.fpr,
            self.fnr,
            self.gfpr,
            self.gfnr,
        ]
    }

    pub(crate) fn from_array(v: [f64; 8]) -> Self {
        MetricsReport {
            l2_error: v[0],
            l1_error: v[1],
            model_size: v[2],
            group_size: v[3],
            fpr: v[4],
            fnr: v[5],
            gfpr: v[6],
            gfnr: v[7],
        }
    }

    /// Metric names in table order.
    pub const NAMES: [&'static str; 8] = ["l2", "l1", "MS", "GS", "FPR", "FNR", "GFPR", "GFNR"];
}

fn rate(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        100.0 * numerator as f64 / denominator as f64
    }
}

/// Computes the selection/estimation metrics of an estimate against the
/// ground truth. Empty reference sets follow the 0/0 -> 0 convention.
pub fn selection_metrics(beta_hat: &CoefficientVector, truth: &GroundTruth) -> Result<MetricsReport> {
    if beta_hat.len() != truth.beta_star().len() {
        return Err(Error::dimension(format!(
            "estimate has length {} but the truth has length {}",
            beta_hat.len(),
            truth.beta_star().len()
        )));
    }
    let p = beta_hat.len();
    let j = truth.beta_star().groups().num_groups();
    let diff: Vec<f64> = beta_hat
        .values()
        .iter()
        .zip(truth.beta_star().values())
        .map(|(a, b)| a - b)
        .collect();
    let l2 = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    let l1 = diff.iter().map(|d| d.abs()).sum::<f64>();

    let selected = beta_hat.support();
    // group selection is always judged against the truth's group structure
    let selected_groups = CoefficientVector::new(
        beta_hat.values().clone(),
        truth.beta_star().groups().clone(),
    )?
    .active_groups();
    let i0 = truth.nonzero_indices();
    let s = truth.important_groups();

    let false_pos = selected.iter().filter(|m| !i0.contains(m)).count();
    let false_neg = i0.iter().filter(|m| !selected.contains(m)).count();
    let gfalse_pos = selected_groups.iter().filter(|g| !s.contains(g)).count();
    let gfalse_neg = s.iter().filter(|g| !selected_groups.contains(g)).count();

    Ok(MetricsReport {
        l2_error: l2,
        l1_error: l1,
        model_size: selected.len() as f64,
        group_size: selected_groups.len() as f64,
        fpr: rate(false_pos, p - i0.len()),
        fnr: rate(false_neg, i0.len()),
        gfpr: rate(gfalse_pos, j - s.len()),
        gfnr: rate(gfalse_neg, s.len()),
    })
}

/// Example-1-style scenario (group-level sparsity): five relevant groups of
/// magnitudes 3, 3, 2, 2, 1.5 followed by zero groups of size 5.
pub fn example1_config(n: usize, zero_groups: usize, error_kind: ErrorKind, replications: usize, seed: u64) -> SimConfig {
    let mut group_sizes = vec![4, 4, 6, 6, 5];
    group_sizes.extend(std::iter::repeat_n(5, zero_groups));
    SimConfig {
        n,
        group_sizes,
        a: 0.8,
        b: 0.5,
        beta_star: vec![
            vec![3.0; 4],
            vec![3.0; 4],
            vec![2.0; 6],
            vec![2.0; 6],
            vec![1.5; 5],
        ],
        error_kind,
        x_contamination: None,
        replications,
        seed,
    }
}

/// Example-2(i)-style scenario (bi-level sparsity): six relevant groups with
/// zeros inside several of them, followed by zero groups of size 5.
pub fn example2_config(n: usize, zero_groups: usize, error_kind: ErrorKind, replications: usize, seed: u64) -> SimConfig {
    let mut group_sizes = vec![4, 5, 6, 6, 4, 5];
    group_sizes.extend(std::iter::repeat_n(5, zero_groups));
    SimConfig {
        n,
        group_sizes,
        a: 0.8,
        b: 0.5,
        beta_star: vec![
            vec![1.5, 2.0, 0.0, 2.5],
            vec![3.0, 2.0, 0.0, 0.0, 2.0],
            vec![1.5, 0.0, 2.5, 3.0, 0.0, 0.0],
            vec![2.0, 1.5, 0.0, 0.0, 0.0, 0.0],
            vec![2.5, 0.0, 0.0, 0.0],
            vec![3.0, 2.5, 2.5, 2.0, 1.5],
        ],
        error_kind,
        x_contamination: None,
        replications,
        seed,
    }
}

/// Example-3-style scenario: the bi-level design with 20% of the covariate
/// rows replaced by recentered chi-square(10) draws.
pub fn example3_config(n: usize, zero_groups: usize, error_kind: ErrorKind, replications: usize, seed: u64) -> SimConfig {
    let mut cfg = example2_config(n, zero_groups, error_kind, replications, seed);
    cfg.x_contamination = Some(Contamination {
        fraction: 0.2,
        unit: ContaminationUnit::Rows,
    });
    cfg
}
