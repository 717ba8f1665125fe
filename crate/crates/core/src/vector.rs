//! Dense vectors for parameters and reputation scores, the per-round
//! gradient matrix, and gradient normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero by [`normalize`].
pub const EPS_NORM: f64 = 1e-12;

/// A finite real vector of fixed dimension. Holds both model parameters `w`
/// and reputation scores `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// `self += a * x`, rejecting the update if it would leave a non-finite entry.
    pub fn axpy(&mut self, a: f64, x: &[f64]) -> Result<()> {
        check_dim(self.len(), x.len())?;
        let next: Vec<f64> = self.0.iter().zip(x).map(|(s, xi)| s + a * xi).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter update"));
        }
        self.0 = next;
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm with compensated summation, so that normalized vectors
/// land within a few ulps of their target norm.
pub fn norm(v: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in v {
        let sq = x * x;
        let t = sum + sq;
        if sum.abs() >= sq {
            comp += (sum - t) + sq;
        } else {
            comp += (sq - t) + sum;
        }
        sum = t;
    }
    (sum + comp).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Rescale `v` to have Euclidean norm `target_norm`. Vectors with norm at or
/// below [`EPS_NORM`] are returned unchanged.
pub fn normalize(v: &[f64], target_norm: f64) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let n = norm(v);
    if !n.is_finite() {
        // entries finite but the sum of squares overflowed
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scaled: Vec<f64> = v.iter().map(|x| x / scale).collect();
        return normalize(&scaled, target_norm);
    }
    if n <= EPS_NORM {
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|x| x / n * target_norm).collect())
}

/// The `m x d` matrix of gradients received in one round; row `j` is worker
/// `worker_ids[j]`'s message.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch {
    data: Vec<f64>,
    dim: usize,
    worker_ids: Vec<usize>,
}

impl GradientBatch {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..rows.len()).collect();
        Self::with_ids(rows, ids)
    }

    pub fn with_ids(rows: Vec<Vec<f64>>, worker_ids: Vec<usize>) -> Result<Self> {
        check_dim(rows.len(), worker_ids.len())?;
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            check_dim(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { data, dim, worker_ids })
    }

    pub fn workers(&self) -> usize {
        self.worker_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn worker_ids(&self) -> &[usize] {
        &self.worker_ids
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.workers())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `H^T q = sum_j q_j h_j`.
    pub fn weighted_sum(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.workers(), q.len())?;
        let mut out = vec![0.0; self.dim];
        for (row, &qj) in self.rows().zip(q) {
            for (o, h) in out.iter_mut().zip(row) {
                *o += qj * h;
            }
        }
        Ok(out)
    }

    /// `H g`, the vector of inner products `<h_j, g>`.
    pub fn project(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, g.len())?;
        Ok(self.rows().map(|row| dot(row, g)).collect())
    }

    pub fn mean_row(&self) -> Vec<f64> {
        let m = self.workers();
        let mut out = vec![0.0; self.dim];
        if m == 0 {
            return out;
        }
        for row in self.rows() {
            for (o, h) in out.iter_mut().zip(row) {
                *o += h;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        out
    }

    /// Coordinate-wise median; for an even number of rows, the mean of the two
    /// middle order statistics.
    pub fn coordinate_median(&self) -> Vec<f64> {
        let m = self.workers();
        let mut column = vec![0.0; m];
        (0..self.dim)
            .map(|i| {
                for (c, row) in column.iter_mut().zip(self.rows()) {
                    *c = row[i];
                }
                median_in_place(&mut column)
            })
            .collect()
    }

    /// Reorder rows: new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let rows = perm.iter().map(|&j| self.row(j).to_vec()).collect();
        let ids = perm.iter().map(|&j| self.worker_ids[j]).collect();
        Self::with_ids(rows, ids).expect("permutation preserves shape")
    }
}

pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
