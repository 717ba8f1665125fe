//! Run configuration: schema, validation and tuned presets.

use serde::{Deserialize, Deserializer, Serialize};

use crate::adversary::{mixed_attack_default, validate_attacks, AttackSpec};
use crate::aggregate::{AggregatorConfig, AggregatorKind};
use crate::data::{SyntheticSpec, TaskKind};
use crate::error::{Error, Result};
use crate::schedule::ScheduleSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Regularization used in theorem-check mode unless set explicitly.
pub const THEOREM_L2_REG: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Normalized gradients, workers sample from their own shards.
    #[default]
    Empirical,
    /// Raw gradients, multiplicative-noise workers only, every worker and
    /// the server sample from the full training set.
    TheoremCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub task: SyntheticSpec,
    pub m: usize,
    #[serde(deserialize_with = "deserialize_attacks")]
    pub attacks: Vec<AttackSpec>,
    pub aggregator: AggregatorConfig,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_batch")]
    pub aux_batch_size: usize,
    pub iterations: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Defaults to 0 in empirical mode and [`THEOREM_L2_REG`] otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_reg: Option<f64>,
    /// Standard deviation of the Gaussian initial parameters.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Log a warning when `||w||` leaves this ball.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball_radius: Option<f64>,
}

fn default_batch() -> usize {
    32
}

fn default_eval_every() -> usize {
    10
}

fn default_init_std() -> f64 {
    0.1
}

/// Accepts either a list of attack tables or the compact string form
/// understood by [`parse_attack_set`].
fn deserialize_attacks<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<AttackSpec>, D::Error> {
    #[derive(Deserialize)]
    struct Full {
        attacks: Vec<AttackSpec>,
    }
    let value = toml::Value::deserialize(d)?;
    match value {
        toml::Value::String(s) => parse_attack_set(&s).map_err(serde::de::Error::custom),
        other => {
            let mut table = toml::Table::new();
            table.insert("attacks".into(), other);
            table
                .try_into::<Full>()
                .map(|f| f.attacks)
                .map_err(|e| serde::de::Error::custom(e.message().to_string()))
        }
    }
}

/// Parse `"mixed"` or a `+`-separated list of `kind[:count]` items, e.g.
/// `"benign:2+sign_flip:6"`. Kinds take their default parameters.
pub fn parse_attack_set(text: &str) -> Result<Vec<AttackSpec>> {
    let text = text.trim();
    if text == "mixed" {
        return mixed_attack_default(8);
    }
    let mut out = Vec::new();
    for item in text.split('+') {
        let (name, count) = match item.split_once(':') {
            Some((n, c)) => (
                n.trim(),
                c.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::config(format!("bad count in attack item {item:?}")))?,
            ),
            None => (item.trim(), 1),
        };
        let spec = AttackSpec::from_name(name)?;
        out.extend(std::iter::repeat_n(spec, count));
    }
    if out.is_empty() {
        return Err(Error::config("empty attack set"));
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn l2(&self) -> f64 {
        match (self.l2_reg, self.mode) {
            (Some(l), _) => l,
            (None, Mode::Empirical) => 0.0,
            (None, Mode::TheoremCheck) => THEOREM_L2_REG,
        }
    }

    pub fn benign_mask(&self) -> Vec<bool> {
        self.attacks.iter().map(AttackSpec::is_benign).collect()
    }

    /// Multiplier of each worker in the multiplicative-noise model, when
    /// every worker fits it.
    pub fn kappa(&self) -> Option<Vec<f64>> {
        self.attacks.iter().map(AttackSpec::kappa).collect()
    }

    /// Replace the attack list and worker count together.
    pub fn with_attacks(mut self, attacks: Vec<AttackSpec>) -> Self {
        self.m = attacks.len();
        self.attacks = attacks;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.task.validate()?;
        self.schedule.validate()?;
        self.aggregator.validate()?;
        if self.m == 0 {
            return Err(Error::config("m must be >= 1"));
        }
        if self.attacks.len() != self.m {
            return Err(Error::config(format!(
                "{} attacks listed for m = {} workers",
                self.attacks.len(),
                self.m
            )));
        }
        validate_attacks(&self.attacks, self.task.kind)?;
        if self.iterations == 0 || self.eval_every == 0 {
            return Err(Error::config("iterations and eval_every must be >= 1"));
        }
        if self.batch_size == 0 || self.aux_batch_size == 0 {
            return Err(Error::config("batch sizes must be >= 1"));
        }
        let l2 = self.l2();
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::config("l2_reg must be finite and >= 0"));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::config("init_std must be finite and >= 0"));
        }
        if let Some(r) = self.ball_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::config("ball_radius must be positive"));
            }
        }
        match self.mode {
            Mode::Empirical => {
                let n_train = self.task.n_train();
                let min_shard = n_train / self.m;
                if min_shard == 0 {
                    return Err(Error::config(format!(
                        "{n_train} training rows cannot fill {} shards",
                        self.m
                    )));
                }
                if self.batch_size > min_shard {
                    return Err(Error::config(format!(
                        "batch_size {} exceeds the smallest shard ({min_shard} rows)",
                        self.batch_size
                    )));
                }
                if self.aux_batch_size > self.task.n_aux {
                    return Err(Error::config(format!(
                        "aux_batch_size {} exceeds n_aux {}",
                        self.aux_batch_size, self.task.n_aux
                    )));
                }
            }
            Mode::TheoremCheck => self.validate_theorem_mode()?,
        }
        Ok(())
    }

    fn validate_theorem_mode(&self) -> Result<()> {
        if self.task.kind != TaskKind::Regression {
            return Err(Error::config("theorem_check mode needs a regression task"));
        }
        if self.l2() <= 0.0 {
            return Err(Error::config(
                "theorem_check mode needs l2_reg > 0 for strong convexity",
            ));
        }
        let kappa = self.kappa().ok_or_else(|| {
            Error::config("theorem_check mode allows only benign, sign_flip and scaled_multiplicative workers")
        })?;
        if kappa.iter().all(|k| *k == 0.0) {
            return Err(Error::config(
                "theorem_check mode needs at least one worker with kappa != 0",
            ));
        }
        let n_train = self.task.n_train();
        if self.batch_size > n_train || self.aux_batch_size > n_train {
            return Err(Error::config(format!(
                "batch sizes must not exceed the {n_train} training rows"
            )));
        }
        Ok(())
    }

    /// Tuned empirical defaults for a task and aggregator.
    pub fn preset(task: TaskKind, kind: AggregatorKind, attacks: Vec<AttackSpec>) -> Self {
        let (spec, iterations) = match task {
            TaskKind::Regression => (SyntheticSpec::regression(), 2000),
            TaskKind::Classification => (SyntheticSpec::classification(), 3000),
        };
        RunConfig {
            schema_version: SCHEMA_VERSION,
            mode: Mode::Empirical,
            seed: 0,
            task: spec,
            m: attacks.len(),
            attacks,
            aggregator: AggregatorConfig::new(kind),
            schedule: empirical_schedule(task, kind),
            batch_size: 32,
            aux_batch_size: 32,
            iterations,
            eval_every: 10,
            l2_reg: None,
            init_std: default_init_std(),
            ball_radius: None,
        }
    }

    /// Theorem-check defaults: ByGARS++ on regression with raw gradients.
    pub fn theorem_preset(attacks: Vec<AttackSpec>) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            mode: Mode::TheoremCheck,
            seed: 0,
            task: SyntheticSpec::regression(),
            m: attacks.len(),
            attacks,
            aggregator: AggregatorConfig::new(AggregatorKind::BygarsPp),
            schedule: theorem_schedule(),
            batch_size: 32,
            aux_batch_size: 32,
            iterations: 20_000,
            eval_every: 100,
            l2_reg: Some(THEOREM_L2_REG),
            init_std: default_init_std(),
            ball_radius: Some(1e3),
        }
    }
}

/// Step-size schedules for the synthetic tasks.
///
/// For ByGARS the trajectory depends on `alpha0 * gamma0^2` and the two
/// decay rates only, since the step is `gamma * q` and `q` grows by
/// `alpha * gamma` per meta-iteration.
pub fn empirical_schedule(task: TaskKind, kind: AggregatorKind) -> ScheduleSpec {
    use AggregatorKind::*;
    use TaskKind::*;
    let (gamma0, alpha0, beta_m) = match (task, kind) {
        (Regression, Bygars) => (0.1, 5.0, 0.5),
        (Classification, Bygars) => (0.1, 2.0, 2.0),
        // ByGARS++ scores stay small on classification, so its step is larger
        (Regression, BygarsPp) => (0.1, 0.05, 0.1),
        (Classification, BygarsPp) => (1.0, 0.05, 0.1),
        (_, Average | Median | BaselineOracle) => (0.1, 0.1, 0.1),
    };
    ScheduleSpec::new(gamma0, 0.05, alpha0, beta_m)
}

/// Schedules satisfying `gamma_t / alpha_t -> 0` with square-summable steps.
pub fn theorem_schedule() -> ScheduleSpec {
    ScheduleSpec::new(0.002, 0.001, 0.1, 0.01).with_exponents(1.0, 0.6)
}
