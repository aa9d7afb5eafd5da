//! Data model for grouped regression problems: group structure, design
//! matrix/response pairs, coefficient vectors with group views, observation
//! weight schemes, and ground-truth descriptors for simulations.

use std::collections::BTreeSet;
use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of `p` coefficient indices into contiguous, non-overlapping
/// groups. Group `j` covers `sizes[j]` consecutive indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl GroupStructure {
    /// Builds a group structure from per-group sizes.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::validation("group sizes must be nonempty"));
        }
        if let Some(j) = sizes.iter().position(|&d| d == 0) {
            return Err(Error::validation(format!("group {j} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &d in &sizes {
            acc += d;
            offsets.push(acc);
        }
        Ok(GroupStructure { sizes, offsets })
    }

    /// Equal blocks of size `d` covering `p` indices; `p` must be divisible by `d`.
    pub fn equal_blocks(p: usize, d: usize) -> Result<Self> {
        if d == 0 || p == 0 || !p.is_multiple_of(d) {
            return Err(Error::validation(format!(
                "cannot split {p} coefficients into equal blocks of {d}"
            )));
        }
        GroupStructure::new(vec![d; p / d])
    }

    /// One singleton group per coefficient (non-group estimators).
    pub fn singletons(p: usize) -> Result<Self> {
        GroupStructure::new(vec![1; p])
    }

    /// Number of groups `J`.
    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of coefficients `p`.
    pub fn num_coefficients(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    /// Size of group `j`.
    pub fn size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Index range covered by group `j`.
    pub fn range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// Largest group size.
    pub fn max_size(&self) -> usize {
        *self.sizes.iter().max().expect("nonempty")
    }

    /// Smallest group size.
    pub fn min_size(&self) -> usize {
        *self.sizes.iter().min().expect("nonempty")
    }

    /// Group-size imbalance: sqrt(max size / min size). Always >= 1.
    pub fn size_ratio(&self) -> f64 {
        (self.max_size() as f64 / self.min_size() as f64).sqrt()
    }

    /// Iterator over group index ranges in group order.
    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.num_groups()).map(move |j| self.range(j))
    }

    /// Group id of coefficient index `m`.
    pub fn group_of(&self, m: usize) -> usize {
        debug_assert!(m < self.num_coefficients());
        match self.offsets.binary_search(&m) {
            Ok(j) if j == self.sizes.len() => j - 1,
            Ok(j) => j,
            Err(j) => j - 1,
        }
    }
}

/// Builds a [`GroupStructure`] from per-group sizes.
pub fn build_group_structure(sizes: &[usize]) -> Result<GroupStructure> {
    GroupStructure::new(sizes.to_vec())
}

/// Dense length-`p` coefficient vector with group-wise read access.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    values: Array1<f64>,
    groups: GroupStructure,
}

impl CoefficientVector {
    pub fn new(values: Array1<f64>, groups: GroupStructure) -> Result<Self> {
        if values.len() != groups.num_coefficients() {
            return Err(Error::dimension(format!(
                "coefficient vector has length {} but groups cover {} indices",
                values.len(),
                groups.num_coefficients()
            )));
        }
        Ok(CoefficientVector { values, groups })
    }

    pub fn zeros(groups: GroupStructure) -> Self {
        let p = groups.num_coefficients();
        CoefficientVector {
            values: Array1::zeros(p),
            groups,
        }
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Read-only view of the coefficients of group `j`.
    pub fn group(&self, j: usize) -> Result<ArrayView1<'_, f64>> {
        if j >= self.groups.num_groups() {
            return Err(Error::validation(format!(
                "group index {j} out of range (J = {})",
                self.groups.num_groups()
            )));
        }
        Ok(self.values.slice(ndarray::s![self.groups.range(j)]))
    }

    /// Euclidean norm of each group block.
    pub fn group_norms(&self) -> Vec<f64> {
        self.groups
            .ranges()
            .map(|r| norm2(&self.values.as_slice().expect("contiguous")[r]))
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// Indices of nonzero coefficients.
    pub fn support(&self) -> BTreeSet<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(m, _)| m)
            .collect()
    }

    /// Groups with at least one nonzero coefficient.
    pub fn active_groups(&self) -> BTreeSet<usize> {
        let values = self.values.as_slice().expect("contiguous");
        (0..self.groups.num_groups())
            .filter(|&j| values[self.groups.range(j)].iter().any(|&v| v != 0.0))
            .collect()
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }
}

/// Reads the coefficients of group `j` as a standalone vector.
pub fn group_view(beta: &CoefficientVector, j: usize) -> Result<Array1<f64>> {
    Ok(beta.group(j)?.to_owned())
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-observation weight functions (w, v) used by the weighted objective.
///
/// Both built-in schemes keep v = 1; `BoundedInfNorm` caps the influence of
/// rows with large sup-norm via w(x) = min(1, c / max_m |x_m|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightScheme {
    Unit,
    BoundedInfNorm { c: f64 },
}

impl WeightScheme {
    pub fn bounded_inf_norm(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::validation(format!(
                "bounded_inf_norm requires a positive finite cap, got {c}"
            )));
        }
        Ok(WeightScheme::BoundedInfNorm { c })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightScheme::Unit => Ok(()),
            WeightScheme::BoundedInfNorm { c } => {
                WeightScheme::bounded_inf_norm(c).map(|_| ())
            }
        }
    }

    /// (w(x), v(x)) for one observation. A zero row under `BoundedInfNorm`
    /// gets w = 1 (c / 0 is treated as +inf and capped).
    pub fn eval(&self, x: ArrayView1<'_, f64>) -> (f64, f64) {
        match *self {
            WeightScheme::Unit => (1.0, 1.0),
            WeightScheme::BoundedInfNorm { c } => {
                let sup = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                let w = if sup > c { c / sup } else { 1.0 };
                (w, 1.0)
            }
        }
    }
}

/// Evaluates a weight scheme on one covariate row.
pub fn eval_weights(scheme: &WeightScheme, x: ArrayView1<'_, f64>) -> Result<(f64, f64)> {
    scheme.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("covariate row contains non-finite entries"));
    }
    Ok(scheme.eval(x))
}

/// A regression problem: n x p design matrix, length-n response, and the
/// group structure of the columns. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    groups: GroupStructure,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, groups: GroupStructure) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::validation("design matrix has no rows"));
        }
        if x.nrows() != y.len() {
            return Err(Error::dimension(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() != groups.num_coefficients() {
            return Err(Error::dimension(format!(
                "X has {} columns but groups cover {} indices",
                x.ncols(),
                groups.num_coefficients()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("design matrix contains non-finite entries"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("response contains non-finite entries"));
        }
        Ok(Dataset { x, y, groups })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn num_observations(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_coefficients(&self) -> usize {
        self.x.ncols()
    }

    /// Copy of the rows listed in `rows`, preserving their order.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::validation("row subset is empty"));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= self.num_observations()) {
            return Err(Error::validation(format!("row index {r} out of range")));
        }
        let x = self.x.select(ndarray::Axis(0), rows);
        let y = self.y.select(ndarray::Axis(0), rows);
        Dataset::new(x, y, self.groups.clone())
    }

    /// Same data with a different column grouping (sizes must cover p).
    pub fn with_groups(&self, groups: GroupStructure) -> Result<Dataset> {
        Dataset::new(self.x.clone(), self.y.clone(), groups)
    }
}

/// True coefficient vector together with its derived sparsity descriptors.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    beta_star: CoefficientVector,
    important_groups: BTreeSet<usize>,
    nonzero_indices: BTreeSet<usize>,
    min_group_strength: f64,
    min_signal_strength: f64,
}

impl GroundTruth {
    /// Derives the support sets and minimum strengths from `beta_star`.
    pub fn from_beta(beta_star: CoefficientVector) -> Self {
        let nonzero_indices = beta_star.support();
        let important_groups = beta_star.active_groups();
        let norms = beta_star.group_norms();
        let min_group_strength = if important_groups.is_empty() {
            0.0
        } else {
            important_groups
                .iter()
                .map(|&j| norms[j])
                .fold(f64::INFINITY, f64::min)
        };
        let min_signal_strength = if nonzero_indices.is_empty() {
            0.0
        } else {
            nonzero_indices
                .iter()
                .map(|&m| beta_star.values()[m].abs())
                .fold(f64::INFINITY, f64::min)
        };
        GroundTruth {
            beta_star,
            important_groups,
            nonzero_indices,
            min_group_strength,
            min_signal_strength,
        }
    }

    pub fn beta_star(&self) -> &CoefficientVector {
        &self.beta_star
    }

    /// Indices of groups with a nonzero block (the set S).
    pub fn important_groups(&self) -> &BTreeSet<usize> {
        &self.important_groups
    }

    /// Indices of nonzero coefficients (the set I0).
    pub fn nonzero_indices(&self) -> &BTreeSet<usize> {
        &self.nonzero_indices
    }

    pub fn min_group_strength(&self) -> f64 {
        self.min_group_strength
    }

    pub fn min_signal_strength(&self) -> f64 {
        self.min_signal_strength
    }
}
