//! Server-side aggregation rules.
//!
//! The two reputation-based rules keep a score `q_j` per worker and step
//! along `H^T q`. ByGARS refits `q` on auxiliary data with a short inner loop
//! before every step; ByGARS++ updates `q` once per step with a contraction.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{sample_batch, Dataset};
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::rng::RngStream;
use crate::schedule::{alpha_at, gamma_at, ScheduleSpec};
use crate::vector::{check_dim, normalize, GradientBatch, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    Bygars,
    BygarsPp,
    Average,
    Median,
    BaselineOracle,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 5] = [
        AggregatorKind::Bygars,
        AggregatorKind::BygarsPp,
        AggregatorKind::Average,
        AggregatorKind::Median,
        AggregatorKind::BaselineOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::Bygars => "bygars",
            AggregatorKind::BygarsPp => "bygars_pp",
            AggregatorKind::Average => "average",
            AggregatorKind::Median => "median",
            AggregatorKind::BaselineOracle => "baseline_oracle",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::config(format!("unknown aggregator {name:?}")))
    }

    pub fn uses_reputation(self) -> bool {
        matches!(self, AggregatorKind::Bygars | AggregatorKind::BygarsPp)
    }

    /// Norm worker rows are rescaled to in empirical mode.
    pub fn worker_norm(self) -> f64 {
        match self {
            AggregatorKind::Bygars => 1.0,
            AggregatorKind::BygarsPp => 2.0,
            _ => 5.0,
        }
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    /// Inner meta-iterations per step (ByGARS only).
    #[serde(default = "default_k_meta")]
    pub k_meta: usize,
    /// Use one auxiliary batch for all meta-iterations of a step.
    #[serde(default)]
    pub reuse_aux_batch: bool,
    /// Norm of the auxiliary gradient inside the oracle baseline's mean.
    #[serde(default = "default_baseline_aux_norm")]
    pub baseline_aux_norm: f64,
}

fn default_k_meta() -> usize {
    3
}

fn default_baseline_aux_norm() -> f64 {
    1.0
}

impl AggregatorConfig {
    pub fn new(kind: AggregatorKind) -> Self {
        Self {
            kind,
            k_meta: default_k_meta(),
            reuse_aux_batch: false,
            baseline_aux_norm: default_baseline_aux_norm(),
        }
    }

    pub fn with_k_meta(mut self, k: usize) -> Self {
        self.k_meta = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_meta == 0 {
            return Err(Error::config("k_meta must be >= 1"));
        }
        if !(self.baseline_aux_norm.is_finite() && self.baseline_aux_norm > 0.0) {
            return Err(Error::config("baseline_aux_norm must be positive and finite"));
        }
        Ok(())
    }
}

/// Target norms for worker rows and auxiliary gradients. `None` leaves
/// values unscaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPolicy {
    pub workers: Option<f64>,
    pub aux: Option<f64>,
}

impl NormPolicy {
    pub const DISABLED: NormPolicy = NormPolicy {
        workers: None,
        aux: None,
    };

    pub fn for_kind(kind: AggregatorKind) -> Self {
        NormPolicy {
            workers: Some(kind.worker_norm()),
            aux: Some(1.0),
        }
    }

    /// Zero out non-finite rows and rescale the rest. Returns the indices of
    /// zeroed rows.
    pub fn apply_rows(&self, h: &mut GradientBatch) -> Result<Vec<usize>> {
        let mut corrupted = Vec::new();
        for j in 0..h.workers() {
            let row = h.row_mut(j);
            if row.iter().any(|v| !v.is_finite()) {
                row.iter_mut().for_each(|v| *v = 0.0);
                corrupted.push(j);
                continue;
            }
            if let Some(target) = self.workers {
                let scaled = normalize(row, target)?;
                row.copy_from_slice(&scaled);
            }
        }
        if !corrupted.is_empty() {
            warn!("zeroed non-finite gradient rows {corrupted:?}");
        }
        Ok(corrupted)
    }

    pub fn apply_aux(&self, g: Vec<f64>) -> Result<Vec<f64>> {
        match self.aux {
            Some(target) => normalize(&g, target),
            None if g.iter().all(|v| v.is_finite()) => Ok(g),
            None => Err(Error::NonFinite("auxiliary gradient")),
        }
    }
}

/// Normalize a round's rows and an auxiliary gradient with the empirical
/// policy of `kind`. Returns the rescaled values and the zeroed row indices.
pub fn apply_norm_policy(
    kind: AggregatorKind,
    mut h: GradientBatch,
    aux_grad: Vec<f64>,
) -> Result<(GradientBatch, Vec<f64>, Vec<usize>)> {
    let policy = NormPolicy::for_kind(kind);
    let corrupted = policy.apply_rows(&mut h)?;
    let aux = policy.apply_aux(aux_grad)?;
    Ok((h, aux, corrupted))
}

/// Server access to the auxiliary data.
#[derive(Debug)]
pub struct AuxOracle<'a> {
    obj: &'a Objective,
    ds: &'a Dataset,
    indices: &'a [usize],
    batch_size: usize,
    rng: RngStream,
    norm: Option<f64>,
}

impl<'a> AuxOracle<'a> {
    pub fn new(
        obj: &'a Objective,
        ds: &'a Dataset,
        indices: &'a [usize],
        batch_size: usize,
        rng: RngStream,
    ) -> Result<Self> {
        if batch_size == 0 || batch_size > indices.len() {
            return Err(Error::config(format!(
                "aux batch size {batch_size} must be in 1..={}",
                indices.len()
            )));
        }
        Ok(Self {
            obj,
            ds,
            indices,
            batch_size,
            rng,
            norm: Some(1.0),
        })
    }

    /// Target norm for returned gradients; `None` returns raw gradients.
    pub fn with_norm(mut self, norm: Option<f64>) -> Self {
        self.norm = norm;
        self
    }

    pub fn norm(&self) -> Option<f64> {
        self.norm
    }

    pub fn set_norm(&mut self, norm: Option<f64>) {
        self.norm = norm;
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Draw a batch. A batch covering the whole auxiliary set is returned
    /// as-is without consuming randomness.
    pub fn sample(&mut self) -> Result<Vec<usize>> {
        if self.batch_size == self.indices.len() {
            return Ok(self.indices.to_vec());
        }
        sample_batch(self.indices, self.batch_size, &mut self.rng)
    }

    pub fn gradient_on(&self, w: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        let g = self.obj.gradient(w, self.ds, batch)?;
        NormPolicy {
            workers: None,
            aux: self.norm,
        }
        .apply_aux(g)
    }

    pub fn gradient(&mut self, w: &[f64]) -> Result<Vec<f64>> {
        let batch = self.sample()?;
        self.gradient_on(w, &batch)
    }
}

/// What one aggregation step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub gamma: f64,
    pub alpha: f64,
    /// The step taken was `w_{t+1} = w_t - gamma * direction`.
    pub direction: Vec<f64>,
    pub corrupted_rows: Vec<usize>,
}

/// Aggregator state: kind, schedules, iteration counter and reputation
/// scores.
#[derive(Debug, Clone)]
pub struct Aggregator {
    config: AggregatorConfig,
    schedule: ScheduleSpec,
    policy: NormPolicy,
    q: Vec<f64>,
    t: u64,
}

impl Aggregator {
    /// `normalize = false` is theorem-check mode: rows and auxiliary
    /// gradients are used raw.
    pub fn new(config: AggregatorConfig, schedule: ScheduleSpec, m: usize, normalize: bool) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        if m == 0 {
            return Err(Error::config("aggregator needs at least one worker"));
        }
        let policy = if normalize {
            NormPolicy::for_kind(config.kind)
        } else {
            NormPolicy::DISABLED
        };
        Ok(Self {
            config,
            schedule,
            policy,
            q: vec![0.0; m],
            t: 0,
        })
    }

    pub fn kind(&self) -> AggregatorKind {
        self.config.kind
    }

    pub fn config(&self) -> &AggregatorConfig {
        &self.config
    }

    pub fn schedule(&self) -> &ScheduleSpec {
        &self.schedule
    }

    pub fn policy(&self) -> NormPolicy {
        self.policy
    }

    /// Reputation scores; all zero for the non-reputation kinds.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn set_q(&mut self, q: Vec<f64>) -> Result<()> {
        check_dim(self.q.len(), q.len())?;
        self.q = q;
        Ok(())
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    /// Auxiliary gradient norm this aggregator expects from the oracle.
    pub fn aux_norm(&self) -> Option<f64> {
        match (self.config.kind, self.policy.aux) {
            (AggregatorKind::BaselineOracle, Some(_)) => Some(self.config.baseline_aux_norm),
            (_, n) => n,
        }
    }

    /// Advance one iteration. `benign` is the ground-truth mask, required by
    /// the oracle baseline and ignored by every other kind.
    pub fn step(
        &mut self,
        w: &mut ParamVector,
        mut h: GradientBatch,
        aux: &mut AuxOracle<'_>,
        benign: Option<&[bool]>,
    ) -> Result<StepInfo> {
        check_dim(self.q.len(), h.workers())?;
        check_dim(w.len(), h.dim())?;
        let corrupted_rows = self.policy.apply_rows(&mut h)?;
        aux.set_norm(self.aux_norm());
        let gamma = gamma_at(&self.schedule, self.t);
        let alpha = alpha_at(&self.schedule, self.t);

        let direction = match self.config.kind {
            AggregatorKind::Bygars => self.bygars(w.as_slice(), &h, aux, gamma, alpha)?,
            AggregatorKind::BygarsPp => self.bygars_pp(w.as_slice(), &h, aux, alpha)?,
            AggregatorKind::Average => h.mean_row(),
            AggregatorKind::Median => h.coordinate_median(),
            AggregatorKind::BaselineOracle => {
                let mask = benign.ok_or_else(|| Error::config("baseline_oracle needs the benign mask"))?;
                check_dim(h.workers(), mask.len())?;
                baseline_direction(&h, mask, aux.gradient(w.as_slice())?)
            }
        };
        w.axpy(-gamma, &direction)?;
        self.t += 1;
        Ok(StepInfo {
            gamma,
            alpha,
            direction,
            corrupted_rows,
        })
    }

    fn bygars(
        &mut self,
        w: &[f64],
        h: &GradientBatch,
        aux: &mut AuxOracle<'_>,
        gamma: f64,
        alpha: f64,
    ) -> Result<Vec<f64>> {
        let mut q = self.q.clone();
        let fixed = if self.config.reuse_aux_batch {
            Some(aux.sample()?)
        } else {
            None
        };
        for _ in 0..self.config.k_meta {
            let step = h.weighted_sum(&q)?;
            let w_hat: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi - gamma * si).collect();
            let g = match &fixed {
                Some(batch) => aux.gradient_on(&w_hat, batch)?,
                None => aux.gradient(&w_hat)?,
            };
            let p = h.project(&g)?;
            for (qi, pi) in q.iter_mut().zip(p) {
                *qi += alpha * gamma * pi;
            }
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reputation scores"));
        }
        self.q = q;
        h.weighted_sum(&self.q)
    }

    fn bygars_pp(&mut self, w: &[f64], h: &GradientBatch, aux: &mut AuxOracle<'_>, alpha: f64) -> Result<Vec<f64>> {
        // auxiliary gradient at w_t, taken before the parameter update
        let g = aux.gradient(w)?;
        let direction = h.weighted_sum(&self.q)?;
        let p = h.project(&g)?;
        for (qi, pi) in self.q.iter_mut().zip(p) {
            *qi = (1.0 - alpha) * *qi + alpha * pi;
        }
        if self.q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reputation scores"));
        }
        Ok(direction)
    }
}

/// Mean over the benign rows together with the auxiliary gradient.
fn baseline_direction(h: &GradientBatch, benign: &[bool], aux: Vec<f64>) -> Vec<f64> {
    let mut sum = aux;
    let mut count = 1.0;
    for (j, &b) in benign.iter().enumerate() {
        if b {
            for (s, v) in sum.iter_mut().zip(h.row(j)) {
                *s += v;
            }
            count += 1.0;
        }
    }
    sum.iter_mut().for_each(|s| *s /= count);
    sum
}
