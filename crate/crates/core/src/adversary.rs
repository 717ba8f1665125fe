//! Worker behaviors: honest gradients and the attack suite.
//!
//! A round runs in two phases. Every worker first computes its own local
//! gradient on a mini-batch from its shard (label-flip workers use reversed
//! labels). Then local attacks transform their own row, while colluding
//! attacks replace their row using the honest gradients of the benign
//! workers only.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{gaussian_vec, sample_batch, Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::objective::{LabelMap, Objective};
use crate::rng::RngStream;
use crate::vector::{normalize, GradientBatch};

/// Per-worker behavior. Serialized with a `kind` tag; parameter names are
/// part of the config schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    Benign,
    /// Sends `scale * h` with `scale < 0`.
    SignFlip {
        #[serde(default = "defaults::sign_flip_scale")]
        scale: f64,
    },
    /// Sends `k * h` with `k ~ N(mean, std^2)` redrawn every round.
    RandomSignFlip {
        #[serde(default = "defaults::random_sign_flip_mean")]
        mean: f64,
        #[serde(default = "defaults::one")]
        std: f64,
    },
    /// Sends a draw from `N(0, noise_std^2 I)`, ignoring its data.
    Gaussian {
        #[serde(default = "defaults::gaussian_std")]
        noise_std: f64,
    },
    /// Sends `value * 1`.
    Constant {
        #[serde(default = "defaults::hundred")]
        value: f64,
    },
    /// Honest gradient on labels mapped `l -> K - 1 - l`.
    LabelFlip,
    /// Sends `scale * mean(benign)` with `scale < 0`.
    InnerProduct {
        #[serde(default = "defaults::sign_flip_scale")]
        scale: f64,
    },
    /// Sends `mu - z * sigma`, coordinate-wise over the benign gradients.
    Lie {
        #[serde(default = "defaults::lie_z")]
        z: f64,
    },
    /// Sends `mean(benign) + magnitude * u` with `u` a unit vector fixed for
    /// the whole run.
    Ofom {
        #[serde(default = "defaults::hundred")]
        magnitude: f64,
    },
    /// Like [`AttackSpec::Ofom`] but `u` is redrawn every round.
    Paf {
        #[serde(default = "defaults::hundred")]
        magnitude: f64,
    },
    /// Multiplicative noise: sends `k * h` with `k ~ clip(N(kappa_mean,
    /// kappa_std^2), -kappa_max, kappa_max)` iid per round.
    ScaledMultiplicative {
        kappa_mean: f64,
        #[serde(default)]
        kappa_std: f64,
        #[serde(default = "defaults::kappa_max")]
        kappa_max: f64,
    },
}

mod defaults {
    pub fn sign_flip_scale() -> f64 {
        -1.0
    }
    pub fn random_sign_flip_mean() -> f64 {
        -2.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn gaussian_std() -> f64 {
        200f64.sqrt()
    }
    pub fn hundred() -> f64 {
        100.0
    }
    pub fn lie_z() -> f64 {
        1.5
    }
    pub fn kappa_max() -> f64 {
        10.0
    }
}

impl AttackSpec {
    pub fn sign_flip() -> Self {
        AttackSpec::SignFlip { scale: -1.0 }
    }

    pub fn random_sign_flip() -> Self {
        AttackSpec::RandomSignFlip { mean: -2.0, std: 1.0 }
    }

    pub fn gaussian() -> Self {
        AttackSpec::Gaussian {
            noise_std: defaults::gaussian_std(),
        }
    }

    pub fn constant() -> Self {
        AttackSpec::Constant { value: 100.0 }
    }

    pub fn inner_product() -> Self {
        AttackSpec::InnerProduct { scale: -1.0 }
    }

    pub fn lie(z: f64) -> Self {
        AttackSpec::Lie { z }
    }

    pub fn ofom() -> Self {
        AttackSpec::Ofom { magnitude: 100.0 }
    }

    pub fn paf() -> Self {
        AttackSpec::Paf { magnitude: 100.0 }
    }

    pub fn scaled(kappa_mean: f64, kappa_std: f64, kappa_max: f64) -> Self {
        AttackSpec::ScaledMultiplicative {
            kappa_mean,
            kappa_std,
            kappa_max,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::Benign => "benign",
            AttackSpec::SignFlip { .. } => "sign_flip",
            AttackSpec::RandomSignFlip { .. } => "random_sign_flip",
            AttackSpec::Gaussian { .. } => "gaussian",
            AttackSpec::Constant { .. } => "constant",
            AttackSpec::LabelFlip => "label_flip",
            AttackSpec::InnerProduct { .. } => "inner_product",
            AttackSpec::Lie { .. } => "lie",
            AttackSpec::Ofom { .. } => "ofom",
            AttackSpec::Paf { .. } => "paf",
            AttackSpec::ScaledMultiplicative { .. } => "scaled_multiplicative",
        }
    }

    /// Default-parameter spec for a kind name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "benign" => AttackSpec::Benign,
            "sign_flip" => Self::sign_flip(),
            "random_sign_flip" => Self::random_sign_flip(),
            "gaussian" => Self::gaussian(),
            "constant" => Self::constant(),
            "label_flip" => AttackSpec::LabelFlip,
            "inner_product" => Self::inner_product(),
            "lie" => Self::lie(defaults::lie_z()),
            "ofom" => Self::ofom(),
            "paf" => Self::paf(),
            _ => return Err(Error::config(format!("unknown attack kind {name:?}"))),
        })
    }

    pub fn is_benign(&self) -> bool {
        matches!(self, AttackSpec::Benign)
    }

    pub fn is_colluding(&self) -> bool {
        matches!(
            self,
            AttackSpec::InnerProduct { .. } | AttackSpec::Lie { .. } | AttackSpec::Ofom { .. } | AttackSpec::Paf { .. }
        )
    }

    /// Mean multiplier `E[h] = kappa * grad F` for the multiplicative-noise
    /// model, or `None` for attacks outside it. For the clipped Gaussian this
    /// is the exact mean after clipping.
    pub fn kappa(&self) -> Option<f64> {
        match *self {
            AttackSpec::Benign => Some(1.0),
            AttackSpec::SignFlip { scale } => Some(scale),
            AttackSpec::ScaledMultiplicative {
                kappa_mean,
                kappa_std,
                kappa_max,
            } => Some(clipped_normal_mean(kappa_mean, kappa_std, kappa_max)),
            _ => None,
        }
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("attack {}: {msg}", self.name())));
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("attack {}: {name} must be finite", self.name())))
            }
        };
        match *self {
            AttackSpec::Benign => Ok(()),
            AttackSpec::SignFlip { scale } | AttackSpec::InnerProduct { scale } => {
                finite("scale", scale)?;
                if scale >= 0.0 {
                    return bad(format!("scale must be negative, got {scale}"));
                }
                Ok(())
            }
            AttackSpec::RandomSignFlip { mean, std } => {
                finite("mean", mean)?;
                finite("std", std)?;
                if std < 0.0 {
                    return bad("std must be >= 0".into());
                }
                Ok(())
            }
            AttackSpec::Gaussian { noise_std } => {
                finite("noise_std", noise_std)?;
                if noise_std < 0.0 {
                    return bad("noise_std must be >= 0".into());
                }
                Ok(())
            }
            AttackSpec::Constant { value } => finite("value", value),
            AttackSpec::LabelFlip => {
                if task != TaskKind::Classification {
                    return bad("label flipping needs a classification task".into());
                }
                Ok(())
            }
            AttackSpec::Lie { z } => finite("z", z),
            AttackSpec::Ofom { magnitude } | AttackSpec::Paf { magnitude } => {
                finite("magnitude", magnitude)?;
                if magnitude < 0.0 {
                    return bad("magnitude must be >= 0".into());
                }
                Ok(())
            }
            AttackSpec::ScaledMultiplicative {
                kappa_mean,
                kappa_std,
                kappa_max,
            } => {
                finite("kappa_mean", kappa_mean)?;
                finite("kappa_std", kappa_std)?;
                finite("kappa_max", kappa_max)?;
                if kappa_std < 0.0 || kappa_max <= 0.0 {
                    return bad("kappa_std must be >= 0 and kappa_max > 0".into());
                }
                if kappa_mean.abs() > kappa_max {
                    return bad(format!("|kappa_mean| must not exceed kappa_max ({kappa_max})"));
                }
                Ok(())
            }
        }
    }

    /// Apply a local (non-colluding) transformation to this worker's own
    /// honest gradient. Colluding kinds return the input unchanged.
    pub fn apply_local(&self, honest: Vec<f64>, rng: &mut RngStream) -> Vec<f64> {
        match *self {
            AttackSpec::Benign | AttackSpec::LabelFlip => honest,
            AttackSpec::SignFlip { scale } => honest.into_iter().map(|h| scale * h).collect(),
            AttackSpec::RandomSignFlip { mean, std } => {
                let k = mean + std * rng.sample::<f64, _>(StandardNormal);
                honest.into_iter().map(|h| k * h).collect()
            }
            AttackSpec::Gaussian { noise_std } => gaussian_vec(honest.len(), noise_std, rng),
            AttackSpec::Constant { value } => vec![value; honest.len()],
            AttackSpec::ScaledMultiplicative {
                kappa_mean,
                kappa_std,
                kappa_max,
            } => {
                let k = (kappa_mean + kappa_std * rng.sample::<f64, _>(StandardNormal)).clamp(-kappa_max, kappa_max);
                honest.into_iter().map(|h| k * h).collect()
            }
            AttackSpec::InnerProduct { .. }
            | AttackSpec::Lie { .. }
            | AttackSpec::Ofom { .. }
            | AttackSpec::Paf { .. } => honest,
        }
    }
}

/// `E[clip(X, -c, c)]` for `X ~ N(mu, sigma^2)`.
pub fn clipped_normal_mean(mu: f64, sigma: f64, c: f64) -> f64 {
    if sigma == 0.0 {
        return mu.clamp(-c, c);
    }
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
    let a = (-c - mu) / sigma;
    let b = (c - mu) / sigma;
    -c * cdf(a) + c * (1.0 - cdf(b)) + mu * (cdf(b) - cdf(a)) + sigma * (phi(a) - phi(b))
}

/// The standard mixed attack on 8 workers: worker 0 benign, then one
/// Gaussian, two sign-flip, one random sign-flip, two label-flip and one
/// constant adversary.
pub fn mixed_attack_default(m: usize) -> Result<Vec<AttackSpec>> {
    if m != 8 {
        return Err(Error::config(format!(
            "the mixed attack is defined for 8 workers, got {m}"
        )));
    }
    Ok(vec![
        AttackSpec::Benign,
        AttackSpec::gaussian(),
        AttackSpec::sign_flip(),
        AttackSpec::sign_flip(),
        AttackSpec::random_sign_flip(),
        AttackSpec::LabelFlip,
        AttackSpec::LabelFlip,
        AttackSpec::constant(),
    ])
}

/// Reject attack lists whose colluders would have no benign gradients to read.
pub fn validate_attacks(attacks: &[AttackSpec], task: TaskKind) -> Result<()> {
    for a in attacks {
        a.validate(task)?;
    }
    if attacks.iter().any(AttackSpec::is_colluding) && !attacks.iter().any(AttackSpec::is_benign) {
        return Err(Error::config(
            "colluding attacks (inner_product, lie, ofom, paf) need at least one benign worker",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct WorkerState {
    pub worker_id: usize,
    pub shard: Vec<usize>,
    pub attack: AttackSpec,
    pub rng: RngStream,
    /// OFOM direction, drawn on first use and then fixed.
    fixed_direction: Option<Vec<f64>>,
}

impl WorkerState {
    pub fn new(worker_id: usize, shard: Vec<usize>, attack: AttackSpec, rng: RngStream) -> Result<Self> {
        if shard.is_empty() {
            return Err(Error::config(format!("worker {worker_id} has an empty shard")));
        }
        Ok(Self {
            worker_id,
            shard,
            attack,
            rng,
            fixed_direction: None,
        })
    }

    /// Mini-batch gradient on this worker's shard at `w`.
    pub fn honest_gradient(&mut self, obj: &Objective, ds: &Dataset, w: &[f64], batch_size: usize) -> Result<Vec<f64>> {
        let batch = sample_batch(&self.shard, batch_size, &mut self.rng)?;
        let labels = match self.attack {
            AttackSpec::LabelFlip => LabelMap::Reversed,
            _ => LabelMap::Identity,
        };
        obj.gradient_with_labels(w, ds, &batch, labels)
    }

    fn direction(&mut self, dim: usize, fresh: bool) -> Vec<f64> {
        if fresh {
            return random_unit(dim, &mut self.rng);
        }
        if self.fixed_direction.is_none() {
            self.fixed_direction = Some(random_unit(dim, &mut self.rng));
        }
        self.fixed_direction.clone().expect("set above")
    }
}

fn random_unit(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    let std = Normal::new(0.0, 1.0).expect("valid");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| std.sample(rng)).collect();
        if let Ok(u) = normalize(&v, 1.0) {
            if u.iter().any(|x| *x != 0.0) {
                return u;
            }
        }
    }
}

/// Coordinate-wise mean and population standard deviation of `rows`.
pub fn coordinate_stats(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let d = rows.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

/// Produce all `m` rows of one round's gradient matrix.
pub fn attack_round(
    workers: &mut [WorkerState],
    obj: &Objective,
    ds: &Dataset,
    w: &[f64],
    batch_size: usize,
) -> Result<GradientBatch> {
    if workers.is_empty() {
        return Err(Error::config("attack round needs at least one worker"));
    }
    let honest = honest_phase(workers, obj, ds, w, batch_size)?;
    collude_phase(workers, honest)
}

#[cfg(feature = "parallel")]
fn honest_phase(
    workers: &mut [WorkerState],
    obj: &Objective,
    ds: &Dataset,
    w: &[f64],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    workers
        .par_iter_mut()
        .map(|ws| ws.honest_gradient(obj, ds, w, batch_size))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn honest_phase(
    workers: &mut [WorkerState],
    obj: &Objective,
    ds: &Dataset,
    w: &[f64],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    workers
        .iter_mut()
        .map(|ws| ws.honest_gradient(obj, ds, w, batch_size))
        .collect()
}

/// Second phase of a round, given every worker's phase-one gradient.
pub fn collude_phase(workers: &mut [WorkerState], honest: Vec<Vec<f64>>) -> Result<GradientBatch> {
    let benign: Vec<&[f64]> = workers
        .iter()
        .zip(&honest)
        .filter(|(ws, _)| ws.attack.is_benign())
        .map(|(_, h)| h.as_slice())
        .collect();
    let needs_benign = workers.iter().any(|ws| ws.attack.is_colluding());
    if needs_benign && benign.is_empty() {
        return Err(Error::config("colluding attack with zero benign workers"));
    }
    let (mu, sigma) = if needs_benign {
        coordinate_stats(&benign)
    } else {
        (Vec::new(), Vec::new())
    };

    let dim = honest.first().map_or(0, Vec::len);
    let mut rows = Vec::with_capacity(workers.len());
    for (ws, h) in workers.iter_mut().zip(honest) {
        let row = match ws.attack {
            AttackSpec::InnerProduct { scale } => mu.iter().map(|m| scale * m).collect(),
            AttackSpec::Lie { z } => mu.iter().zip(&sigma).map(|(m, s)| m - z * s).collect(),
            AttackSpec::Ofom { magnitude } | AttackSpec::Paf { magnitude } => {
                let fresh = matches!(ws.attack, AttackSpec::Paf { .. });
                let u = ws.direction(dim, fresh);
                mu.iter().zip(&u).map(|(m, ui)| m + magnitude * ui).collect()
            }
            _ => {
                let attack = ws.attack.clone();
                attack.apply_local(h, &mut ws.rng)
            }
        };
        rows.push(row);
    }
    let ids = workers.iter().map(|ws| ws.worker_id).collect();
    GradientBatch::with_ids(rows, ids)
}
