//! Synthetic regression and classification tasks, the worker/auxiliary/test
//! split, and mini-batch sampling.

mod io;

pub use io::{read_dataset, write_dataset};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    Classification { labels: Vec<usize>, classes: usize },
}

/// Row-major feature matrix plus targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    targets: Targets,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, targets: Targets) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dataset dimension must be positive"));
        }
        let n = match &targets {
            Targets::Regression(y) => y.len(),
            Targets::Classification { labels, .. } => labels.len(),
        };
        if n == 0 {
            return Err(Error::config("dataset must have at least one row"));
        }
        if features.len() != n * dim {
            return Err(Error::Dimension {
                expected: n * dim,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        match &targets {
            Targets::Regression(y) if y.iter().any(|v| !v.is_finite()) => {
                return Err(Error::NonFinite("dataset targets"));
            }
            Targets::Classification { labels, classes } => {
                if *classes < 2 {
                    return Err(Error::config("classification needs at least 2 classes"));
                }
                if let Some(bad) = labels.iter().find(|&&l| l >= *classes) {
                    return Err(Error::config(format!("label {bad} out of range 0..{classes}")));
                }
            }
            _ => {}
        }
        Ok(Self { features, dim, targets })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> TaskKind {
        match self.targets {
            Targets::Regression(_) => TaskKind::Regression,
            Targets::Classification { .. } => TaskKind::Classification,
        }
    }

    /// Number of classes, or 0 for regression.
    pub fn classes(&self) -> usize {
        match self.targets {
            Targets::Regression(_) => 0,
            Targets::Classification { classes, .. } => classes,
        }
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Regression target of row `i`. Panics on a classification dataset.
    pub fn y(&self, i: usize) -> f64 {
        match &self.targets {
            Targets::Regression(y) => y[i],
            Targets::Classification { .. } => panic!("y() on a classification dataset"),
        }
    }

    /// Class label of row `i`. Panics on a regression dataset.
    pub fn label(&self, i: usize) -> usize {
        match &self.targets {
            Targets::Classification { labels, .. } => labels[i],
            Targets::Regression(_) => panic!("label() on a regression dataset"),
        }
    }
}

/// Parameters of a synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: TaskKind,
    #[serde(default = "defaults::d")]
    pub d: usize,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::n_test")]
    pub n_test: usize,
    #[serde(default = "defaults::n_aux")]
    pub n_aux: usize,
    /// Regression label noise.
    #[serde(default = "defaults::noise_std")]
    pub noise_std: f64,
    /// Mean of every coordinate of the ground-truth regression vector.
    #[serde(default = "defaults::theta_star_mean")]
    pub theta_star_mean: f64,
    /// Class count (classification only).
    #[serde(default = "defaults::classes")]
    pub classes: usize,
    /// Distance of each class mean from the origin (classification only).
    #[serde(default = "defaults::class_sep")]
    pub class_sep: f64,
}

mod defaults {
    pub fn d() -> usize {
        20
    }
    pub fn n() -> usize {
        10_000
    }
    pub fn n_test() -> usize {
        2_000
    }
    pub fn n_aux() -> usize {
        250
    }
    pub fn noise_std() -> f64 {
        0.1
    }
    pub fn theta_star_mean() -> f64 {
        1.0
    }
    pub fn classes() -> usize {
        10
    }
    pub fn class_sep() -> f64 {
        4.0
    }
}

impl SyntheticSpec {
    pub fn regression() -> Self {
        Self {
            kind: TaskKind::Regression,
            d: defaults::d(),
            n: defaults::n(),
            n_test: defaults::n_test(),
            n_aux: defaults::n_aux(),
            noise_std: defaults::noise_std(),
            theta_star_mean: defaults::theta_star_mean(),
            classes: defaults::classes(),
            class_sep: defaults::class_sep(),
        }
    }

    pub fn classification() -> Self {
        Self {
            kind: TaskKind::Classification,
            ..Self::regression()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::config("task.d and task.n must be positive"));
        }
        if self.n_test + self.n_aux >= self.n {
            return Err(Error::config(format!(
                "n_test + n_aux ({}) must be less than n ({})",
                self.n_test + self.n_aux,
                self.n
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("task.noise_std must be >= 0"));
        }
        if !self.theta_star_mean.is_finite() {
            return Err(Error::config("task.theta_star_mean must be finite"));
        }
        if self.kind == TaskKind::Classification {
            if self.classes < 2 {
                return Err(Error::config("task.classes must be >= 2"));
            }
            if self.classes > self.d {
                return Err(Error::config("task.classes must not exceed task.d"));
            }
            if !(self.class_sep.is_finite() && self.class_sep > 0.0) {
                return Err(Error::config("task.class_sep must be positive"));
            }
        }
        Ok(())
    }

    /// Rows left for worker shards once test and auxiliary rows are removed.
    pub fn n_train(&self) -> usize {
        self.n - self.n_test - self.n_aux
    }
}

/// Linear-Gaussian regression: `theta* ~ N(mean * 1, I)`, `x ~ N(0, I)`,
/// `y = x^T theta* + eps` with `eps ~ N(0, noise_std^2)`.
pub fn generate_regression(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<(Dataset, ParamVector)> {
    spec.validate()?;
    let d = spec.d;
    let theta: Vec<f64> = (0..d)
        .map(|_| spec.theta_star_mean + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut features = Vec::with_capacity(spec.n * d);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let start = features.len();
        features.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let clean: f64 = features[start..].iter().zip(&theta).map(|(x, t)| x * t).sum();
        let noise = if spec.noise_std > 0.0 {
            spec.noise_std * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        y.push(clean + noise);
    }
    let ds = Dataset::new(features, d, Targets::Regression(y))?;
    Ok((ds, ParamVector::new(theta)?))
}

/// Gaussian blobs with unit covariance. Class `k` has mean `class_sep * e_k`,
/// so all means are equidistant from the origin and from each other and a
/// bias-free linear classifier is Bayes-optimal. Labels are drawn uniformly.
pub fn generate_classification(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.d;
    let k = spec.classes;
    let mut features = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        // Cycle through classes first so small datasets still cover every
        // class, then shuffle below.
        let label = if i < k { i } else { rng.random_range(0..k) };
        let start = features.len();
        features.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        features[start + label] += spec.class_sep;
        labels.push(label);
    }
    let mut order: Vec<usize> = (0..spec.n).collect();
    order.shuffle(rng);
    let features = order
        .iter()
        .flat_map(|&i| features[i * d..(i + 1) * d].iter().copied())
        .collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    Dataset::new(features, d, Targets::Classification { labels, classes: k })
}

pub fn generate(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<(Dataset, Option<ParamVector>)> {
    match spec.kind {
        TaskKind::Regression => generate_regression(spec, rng).map(|(ds, t)| (ds, Some(t))),
        TaskKind::Classification => generate_classification(spec, rng).map(|ds| (ds, None)),
    }
}

/// Disjoint index sets over the rows of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub worker_shards: Vec<Vec<usize>>,
    pub auxiliary: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    /// Union of all worker shards, sorted.
    pub fn training_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.worker_shards.iter().flatten().copied().collect();
        rows.sort_unstable();
        rows
    }
}

/// Shuffle rows, carve off test and auxiliary sets, then deal the remainder
/// into `m` shards whose sizes differ by at most one.
pub fn partition(n: usize, m: usize, n_aux: usize, n_test: usize, rng: &mut RngStream) -> Result<DataSplit> {
    if m == 0 {
        return Err(Error::config("need at least one worker"));
    }
    if n_aux + n_test >= n || n - n_aux - n_test < m {
        return Err(Error::config(format!(
            "cannot give {m} workers a non-empty shard from {n} rows after {n_test} test and {n_aux} auxiliary rows"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    let test = rows[..n_test].to_vec();
    let auxiliary = rows[n_test..n_test + n_aux].to_vec();
    let rest = &rows[n_test + n_aux..];
    let base = rest.len() / m;
    let extra = rest.len() % m;
    let mut worker_shards = Vec::with_capacity(m);
    let mut start = 0;
    for j in 0..m {
        let size = base + usize::from(j < extra);
        worker_shards.push(rest[start..start + size].to_vec());
        start += size;
    }
    Ok(DataSplit {
        worker_shards,
        auxiliary,
        test,
    })
}

/// Uniform sample of `batch_size` distinct entries of `indices`.
pub fn sample_batch(indices: &[usize], batch_size: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if batch_size > indices.len() {
        return Err(Error::config(format!(
            "batch size {batch_size} exceeds index set of size {}",
            indices.len()
        )));
    }
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    Ok(rand::seq::index::sample(rng, indices.len(), batch_size)
        .into_iter()
        .map(|k| indices[k])
        .collect())
}

/// Draw `n` iid samples from `N(0, std^2)`.
pub(crate) fn gaussian_vec(n: usize, std: f64, rng: &mut RngStream) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("std validated");
    (0..n).map(|_| dist.sample(rng)).collect()
}
