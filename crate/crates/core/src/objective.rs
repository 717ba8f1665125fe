//! Linear least squares and linear softmax objectives with closed-form
//! gradients.
//!
//! Parameters for the softmax model are a `classes x d` matrix stored
//! row-major, one row of weights per class.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::vector::{check_dim, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    MseLinear,
    SoftmaxLinear,
}

/// How class labels are read when computing a gradient. `Reversed` maps
/// `l -> classes - 1 - l` (label flipping).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMap {
    Identity,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    kind: ObjectiveKind,
    l2_reg: f64,
    d: usize,
    classes: usize,
}

impl Objective {
    pub fn mse(d: usize, l2_reg: f64) -> Result<Self> {
        Self::build(ObjectiveKind::MseLinear, d, 0, l2_reg)
    }

    pub fn softmax(d: usize, classes: usize, l2_reg: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config("softmax objective needs at least 2 classes"));
        }
        Self::build(ObjectiveKind::SoftmaxLinear, d, classes, l2_reg)
    }

    /// The natural objective for a dataset: MSE for regression, softmax for
    /// classification.
    pub fn for_dataset(ds: &Dataset, l2_reg: f64) -> Result<Self> {
        match ds.kind() {
            TaskKind::Regression => Self::mse(ds.dim(), l2_reg),
            TaskKind::Classification => Self::softmax(ds.dim(), ds.classes(), l2_reg),
        }
    }

    fn build(kind: ObjectiveKind, d: usize, classes: usize, l2_reg: f64) -> Result<Self> {
        if !(l2_reg.is_finite() && l2_reg >= 0.0) {
            return Err(Error::config(format!("l2_reg must be >= 0, got {l2_reg}")));
        }
        if d == 0 {
            return Err(Error::config("objective dimension must be positive"));
        }
        Ok(Self {
            kind,
            l2_reg,
            d,
            classes,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn l2_reg(&self) -> f64 {
        self.l2_reg
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Length of the parameter vector.
    pub fn param_dim(&self) -> usize {
        match self.kind {
            ObjectiveKind::MseLinear => self.d,
            ObjectiveKind::SoftmaxLinear => self.d * self.classes,
        }
    }

    fn check(&self, w: &[f64], ds: &Dataset, rows: &[usize], op: &'static str) -> Result<()> {
        check_dim(self.param_dim(), w.len())?;
        check_dim(self.d, ds.dim())?;
        let expected = match self.kind {
            ObjectiveKind::MseLinear => TaskKind::Regression,
            ObjectiveKind::SoftmaxLinear => TaskKind::Classification,
        };
        if ds.kind() != expected {
            return Err(Error::config("objective does not match dataset kind"));
        }
        if self.kind == ObjectiveKind::SoftmaxLinear && ds.classes() != self.classes {
            return Err(Error::Dimension {
                expected: self.classes,
                got: ds.classes(),
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptyRows(op));
        }
        Ok(())
    }

    fn regularizer(&self, w: &[f64]) -> f64 {
        0.5 * self.l2_reg * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Mean per-example loss over `rows` plus `(l2_reg / 2) ||w||^2`.
    pub fn loss(&self, w: &[f64], ds: &Dataset, rows: &[usize]) -> Result<f64> {
        self.check(w, ds, rows, "loss")?;
        let total: f64 = match self.kind {
            ObjectiveKind::MseLinear => rows
                .iter()
                .map(|&i| {
                    let r = linear(w, ds.x(i)) - ds.y(i);
                    0.5 * r * r
                })
                .sum(),
            ObjectiveKind::SoftmaxLinear => {
                let mut logits = vec![0.0; self.classes];
                rows.iter()
                    .map(|&i| {
                        self.logits(w, ds.x(i), &mut logits);
                        cross_entropy(&logits, ds.label(i))
                    })
                    .sum()
            }
        };
        Ok(total / rows.len() as f64 + self.regularizer(w))
    }

    /// Mean per-example gradient over `rows` plus `l2_reg * w`.
    pub fn gradient(&self, w: &[f64], ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        self.gradient_with_labels(w, ds, rows, LabelMap::Identity)
    }

    pub fn gradient_with_labels(&self, w: &[f64], ds: &Dataset, rows: &[usize], labels: LabelMap) -> Result<Vec<f64>> {
        self.check(w, ds, rows, "gradient")?;
        let mut g = vec![0.0; self.param_dim()];
        match self.kind {
            ObjectiveKind::MseLinear => {
                for &i in rows {
                    let x = ds.x(i);
                    let r = linear(w, x) - ds.y(i);
                    for (gj, xj) in g.iter_mut().zip(x) {
                        *gj += r * xj;
                    }
                }
            }
            ObjectiveKind::SoftmaxLinear => {
                let k = self.classes;
                let mut p = vec![0.0; k];
                for &i in rows {
                    let x = ds.x(i);
                    self.logits(w, x, &mut p);
                    softmax_in_place(&mut p);
                    let y = match labels {
                        LabelMap::Identity => ds.label(i),
                        LabelMap::Reversed => k - 1 - ds.label(i),
                    };
                    p[y] -= 1.0;
                    for (c, pc) in p.iter().enumerate() {
                        let gc = &mut g[c * self.d..(c + 1) * self.d];
                        for (gj, xj) in gc.iter_mut().zip(x) {
                            *gj += pc * xj;
                        }
                    }
                }
            }
        }
        let n = rows.len() as f64;
        for (gj, wj) in g.iter_mut().zip(w) {
            *gj = *gj / n + self.l2_reg * wj;
        }
        Ok(g)
    }

    /// Gradient over the full training set; the stand-in for the population
    /// gradient.
    pub fn population_gradient(&self, w: &[f64], ds: &Dataset, training_rows: &[usize]) -> Result<Vec<f64>> {
        self.gradient(w, ds, training_rows)
    }

    /// Exact minimizer of the regularized least-squares objective over `rows`:
    /// solves `(X^T X / N + l2 I) w = X^T y / N`.
    pub fn closed_form_optimum(&self, ds: &Dataset, rows: &[usize]) -> Result<ParamVector> {
        if self.kind != ObjectiveKind::MseLinear {
            return Err(Error::config("closed-form optimum exists only for mse_linear"));
        }
        let summary = QuadraticSummary::new(self, ds, rows)?;
        summary.minimizer()
    }

    /// Fraction of `rows` whose argmax logit equals the label.
    pub fn accuracy(&self, w: &[f64], ds: &Dataset, rows: &[usize]) -> Result<f64> {
        self.check(w, ds, rows, "accuracy")?;
        if self.kind != ObjectiveKind::SoftmaxLinear {
            return Err(Error::config("accuracy is defined for classification only"));
        }
        let mut logits = vec![0.0; self.classes];
        let correct = rows
            .iter()
            .filter(|&&i| {
                self.logits(w, ds.x(i), &mut logits);
                argmax(&logits) == ds.label(i)
            })
            .count();
        Ok(correct as f64 / rows.len() as f64)
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = linear(&w[c * self.d..(c + 1) * self.d], x);
        }
    }
}

/// Sufficient statistics of a least-squares objective over a fixed row set:
/// `G = X^T X / N`, `b = X^T y / N`. Gives the full-set gradient
/// `G w - b + l2 w` in `O(d^2)` instead of `O(N d)`.
#[derive(Debug, Clone)]
pub struct QuadraticSummary {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    l2_reg: f64,
}

impl QuadraticSummary {
    pub fn new(obj: &Objective, ds: &Dataset, rows: &[usize]) -> Result<Self> {
        if obj.kind != ObjectiveKind::MseLinear {
            return Err(Error::config("quadratic summary needs mse_linear"));
        }
        obj.check(&vec![0.0; obj.d], ds, rows, "quadratic summary")?;
        let d = obj.d;
        let n = rows.len() as f64;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut xty = DVector::<f64>::zeros(d);
        for &i in rows {
            let x = ds.x(i);
            let y = ds.y(i);
            for a in 0..d {
                xty[a] += x[a] * y;
                for b in a..d {
                    gram[(a, b)] += x[a] * x[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                gram[(a, b)] /= n;
                gram[(b, a)] = gram[(a, b)];
            }
        }
        xty /= n;
        Ok(Self {
            gram,
            xty,
            l2_reg: obj.l2_reg,
        })
    }

    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.xty.len(), w.len())?;
        let wv = DVector::from_column_slice(w);
        let g = &self.gram * &wv - &self.xty + self.l2_reg * &wv;
        Ok(g.as_slice().to_vec())
    }

    pub fn minimizer(&self) -> Result<ParamVector> {
        let d = self.xty.len();
        let a = &self.gram + DMatrix::<f64>::identity(d, d) * self.l2_reg;
        let chol = a.cholesky().ok_or(Error::Singular)?;
        // Cholesky succeeds on numerically semi-definite matrices; reject
        // those explicitly so an unregularized rank-deficient fit errors out.
        let diag_min = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let diag_max = chol.l_dirty().diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if diag_min <= 1e-6 * diag_max {
            return Err(Error::Singular);
        }
        ParamVector::new(chol.solve(&self.xty).as_slice().to_vec())
    }
}

fn linear(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `log_sum_exp(z) - z[label]`, accurate when the label dominates.
fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let top = argmax(z);
    let m = z[top];
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != top)
        .map(|(_, x)| (x - m).exp())
        .sum();
    (m - z[label]) + rest.ln_1p()
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_classification, generate_regression, SyntheticSpec, Targets};
    use crate::rng::RngStream;
    use crate::vector::{dot, norm};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn tiny(x: Vec<f64>, d: usize, y: Vec<f64>) -> Dataset {
        Dataset::new(x, d, Targets::Regression(y)).unwrap()
    }

    fn regression(noise: f64, seed: u64) -> (Dataset, ParamVector) {
        let spec = SyntheticSpec {
            n: 600,
            n_test: 50,
            n_aux: 50,
            d: 6,
            noise_std: noise,
            ..SyntheticSpec::regression()
        };
        generate_regression(&spec, &mut RngStream::new(seed, 1)).unwrap()
    }

    fn classification(seed: u64) -> Dataset {
        let spec = SyntheticSpec {
            n: 300,
            n_test: 30,
            n_aux: 30,
            d: 5,
            classes: 3,
            class_sep: 2.0,
            ..SyntheticSpec::classification()
        };
        generate_classification(&spec, &mut RngStream::new(seed, 1)).unwrap()
    }

    fn all(ds: &Dataset) -> Vec<usize> {
        (0..ds.len()).collect()
    }

    #[test]
    fn mse_single_row_values() {
        let ds = tiny(vec![2.0], 1, vec![0.0]);
        let obj = Objective::mse(1, 0.0).unwrap();
        assert_eq!(obj.loss(&[1.0], &ds, &[0]).unwrap(), 2.0);
        assert_eq!(obj.gradient(&[1.0], &ds, &[0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn mse_zero_at_truth_without_noise() {
        let (ds, theta) = regression(0.0, 1);
        let obj = Objective::mse(6, 0.0).unwrap();
        assert!(obj.loss(theta.as_slice(), &ds, &all(&ds)).unwrap() < 1e-25);
    }

    #[test]
    fn softmax_uniform_logits_give_ln2() {
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let ds = Dataset::new(
            x,
            2,
            Targets::Classification {
                labels: vec![0, 1],
                classes: 2,
            },
        )
        .unwrap();
        let obj = Objective::softmax(2, 2, 0.0).unwrap();
        let l = obj.loss(&[0.0; 4], &ds, &[0, 1]).unwrap();
        assert_relative_eq!(l, std::f64::consts::LN_2, max_relative = 1e-15);
    }

    #[test]
    fn empty_rows_are_errors() {
        let (ds, _) = regression(0.1, 1);
        let obj = Objective::mse(6, 0.0).unwrap();
        assert!(matches!(obj.loss(&[0.0; 6], &ds, &[]), Err(Error::EmptyRows(_))));
        assert!(obj.gradient(&[0.0; 6], &ds, &[]).is_err());
        assert!(obj.gradient(&[0.0; 5], &ds, &[0]).is_err());
    }

    #[test]
    fn closed_form_least_squares_mean() {
        let ds = tiny(vec![1.0, 1.0], 1, vec![2.0, 4.0]);
        let obj = Objective::mse(1, 0.0).unwrap();
        let w = obj.closed_form_optimum(&ds, &[0, 1]).unwrap();
        assert_relative_eq!(w.as_slice()[0], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn closed_form_recovers_theta_without_noise() {
        let (ds, theta) = regression(0.0, 2);
        let obj = Objective::mse(6, 0.0).unwrap();
        let w = obj.closed_form_optimum(&ds, &all(&ds)).unwrap();
        for (a, b) in w.as_slice().iter().zip(theta.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_vanishes_at_closed_form_optimum() {
        let (ds, _) = regression(0.1, 3);
        for l2 in [0.0, 1e-3, 0.5] {
            let obj = Objective::mse(6, l2).unwrap();
            let rows = all(&ds);
            let w = obj.closed_form_optimum(&ds, &rows).unwrap();
            let g = obj.population_gradient(w.as_slice(), &ds, &rows).unwrap();
            assert!(norm(&g) <= 1e-8, "l2={l2} |g|={}", norm(&g));
        }
    }

    #[test]
    fn singular_system_without_regularization() {
        // Two identical feature columns.
        let ds = tiny(vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0], 2, vec![1.0, 2.0, 3.0]);
        let obj = Objective::mse(2, 0.0).unwrap();
        let r = obj.closed_form_optimum(&ds, &[0, 1, 2]);
        assert!(matches!(r, Err(Error::Singular)), "{r:?}");
        let obj = Objective::mse(2, 1e-3).unwrap();
        assert!(obj.closed_form_optimum(&ds, &[0, 1, 2]).is_ok());
    }

    #[test]
    fn population_gradient_matches_matrix_identity() {
        // (1/N) X^T (X w - y) + l2 w, computed with an explicit matrix product.
        let (ds, _) = regression(0.3, 4);
        let obj = Objective::mse(6, 0.25).unwrap();
        let rows = all(&ds);
        let mut rng = RngStream::new(0, 99);
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = DMatrix::from_row_slice(ds.len(), 6, ds.features());
        let y = DVector::from_iterator(ds.len(), rows.iter().map(|&i| ds.y(i)));
        let wv = DVector::from_column_slice(&w);
        let expected = x.transpose() * (&x * &wv - y) / ds.len() as f64 + 0.25 * &wv;
        let got = obj.population_gradient(&w, &ds, &rows).unwrap();
        let fast = QuadraticSummary::new(&obj, &ds, &rows).unwrap().gradient(&w).unwrap();
        for i in 0..6 {
            assert_relative_eq!(got[i], expected[i], epsilon = 1e-12, max_relative = 1e-10);
            assert_relative_eq!(fast[i], expected[i], epsilon = 1e-12, max_relative = 1e-10);
        }
    }

    #[test]
    fn size_one_batches_average_to_shard_gradient() {
        let (ds, _) = regression(0.1, 5);
        let obj = Objective::mse(6, 0.1).unwrap();
        let shard: Vec<usize> = (0..40).collect();
        let w = [0.3, -0.2, 1.0, 0.0, 0.5, 2.0];
        let full = obj.gradient(&w, &ds, &shard).unwrap();
        let mut avg = [0.0; 6];
        for &i in &shard {
            for (a, g) in avg.iter_mut().zip(obj.gradient(&w, &ds, &[i]).unwrap()) {
                *a += g / shard.len() as f64;
            }
        }
        for (a, b) in avg.iter().zip(&full) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn reversed_labels_on_two_classes() {
        let ds = classification(6);
        let obj = Objective::softmax(5, 3, 0.0).unwrap();
        let rows: Vec<usize> = (0..50).collect();
        let w: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let flipped = obj.gradient_with_labels(&w, &ds, &rows, LabelMap::Reversed).unwrap();
        // Rebuild the dataset with labels l -> 2 - l and compare.
        let labels: Vec<usize> = (0..ds.len()).map(|i| 2 - ds.label(i)).collect();
        let relabeled = Dataset::new(
            ds.features().to_vec(),
            5,
            Targets::Classification { labels, classes: 3 },
        )
        .unwrap();
        assert_eq!(flipped, obj.gradient(&w, &relabeled, &rows).unwrap());
    }

    #[test]
    fn accuracy_counts_argmax() {
        let ds = classification(7);
        let obj = Objective::softmax(5, 3, 0.0).unwrap();
        // one-hot means at 2*e_k: the weight matrix [I | 0] is the Bayes rule
        let mut w = vec![0.0; 15];
        for k in 0..3 {
            w[k * 5 + k] = 1.0;
        }
        let acc = obj.accuracy(&w, &ds, &all(&ds)).unwrap();
        assert!(acc > 0.6 && acc <= 1.0, "acc={acc}");
        let reg = Objective::mse(5, 0.0).unwrap();
        assert!(reg.accuracy(&[0.0; 5], &ds, &[0]).is_err());
    }

    fn one_row(x: Vec<f64>, target: Targets) -> Dataset {
        let d = x.len();
        Dataset::new(x, d, target).unwrap()
    }

    /// Largest component-wise relative error between the analytic gradient
    /// and central differences of the loss.
    fn fd_error(obj: &Objective, w: &[f64], ds: &Dataset) -> f64 {
        let h = 1e-5;
        let g = obj.gradient(w, ds, &[0]).unwrap();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..w.len() {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let fd = (obj.loss(&plus, ds, &[0]).unwrap() - obj.loss(&minus, ds, &[0]).unwrap()) / (2.0 * h);
            let denom = g[i].abs().max(1e-3 * scale).max(1e-8);
            worst = worst.max((fd - g[i]).abs() / denom);
        }
        worst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn mse_gradient_matches_finite_differences(
            w in proptest::collection::vec(-3.0f64..3.0, 4),
            x in proptest::collection::vec(-3.0f64..3.0, 4),
            y in -5.0f64..5.0,
            l2 in prop_oneof![Just(0.0), 0.0f64..0.1],
        ) {
            let obj = Objective::mse(4, l2).unwrap();
            let ds = one_row(x, Targets::Regression(vec![y]));
            let err = fd_error(&obj, &w, &ds);
            prop_assert!(err <= 1e-4, "relative error {err}");
        }

        #[test]
        fn softmax_gradient_matches_finite_differences(
            w in proptest::collection::vec(-2.0f64..2.0, 12),
            x in proptest::collection::vec(-3.0f64..3.0, 4),
            label in 0usize..3,
            l2 in prop_oneof![Just(0.0), 0.0f64..0.1],
        ) {
            let obj = Objective::softmax(4, 3, l2).unwrap();
            let ds = one_row(x, Targets::Classification { labels: vec![label], classes: 3 });
            let err = fd_error(&obj, &w, &ds);
            prop_assert!(err <= 1e-4, "relative error {err}");
        }

        #[test]
        fn regularized_mse_is_strongly_convex(
            w1 in proptest::collection::vec(-5.0f64..5.0, 6),
            w2 in proptest::collection::vec(-5.0f64..5.0, 6),
            l2 in 1e-4f64..1.0,
        ) {
            let ds = regression(0.1, 3).0;
            let obj = Objective::mse(6, l2).unwrap();
            let rows = all(&ds);
            let g1 = obj.gradient(&w1, &ds, &rows).unwrap();
            let g2 = obj.gradient(&w2, &ds, &rows).unwrap();
            let dw: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
            let dg: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
            let lhs = dot(&dg, &dw);
            let rhs = l2 * dot(&dw, &dw);
            prop_assert!(lhs >= rhs * (1.0 - 1e-9), "{lhs} < {rhs}");
        }
    }
}
