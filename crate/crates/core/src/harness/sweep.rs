//! Cross products of one config axis with a list of seeds.

use std::io::Write;

use super::config::{parse_attack_set, RunConfig};
use super::run::{run, RunOutput};
use crate::adversary::AttackSpec;
use crate::aggregate::AggregatorKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NAux,
    KMeta,
    Attacks,
    Aggregator,
    BatchSize,
    LieZ,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::NAux,
        SweepAxis::KMeta,
        SweepAxis::Attacks,
        SweepAxis::Aggregator,
        SweepAxis::BatchSize,
        SweepAxis::LieZ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NAux => "n_aux",
            SweepAxis::KMeta => "k_meta",
            SweepAxis::Attacks => "attacks",
            SweepAxis::Aggregator => "aggregator",
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::LieZ => "lie_z",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name).ok_or_else(|| {
            let known: Vec<&str> = Self::ALL.iter().map(|a| a.name()).collect();
            Error::config(format!("unknown sweep axis {name:?} (known: {})", known.join(", ")))
        })
    }

    /// Config with this axis set to `value`.
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut cfg = base.clone();
        let parse_usize = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("{}: expected an integer, got {v:?}", self.name())))
        };
        match self {
            SweepAxis::NAux => {
                cfg.task.n_aux = parse_usize(value)?;
                // keep the auxiliary batch feasible for small auxiliary sets
                cfg.aux_batch_size = cfg.aux_batch_size.min(cfg.task.n_aux);
            }
            SweepAxis::KMeta => cfg.aggregator.k_meta = parse_usize(value)?,
            SweepAxis::Attacks => cfg = cfg.with_attacks(parse_attack_set(value)?),
            SweepAxis::Aggregator => cfg.aggregator.kind = AggregatorKind::from_name(value.trim())?,
            SweepAxis::BatchSize => cfg.batch_size = parse_usize(value)?,
            SweepAxis::LieZ => {
                let z: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("lie_z: expected a number, got {value:?}")))?;
                let mut found = false;
                for a in cfg.attacks.iter_mut() {
                    if let AttackSpec::Lie { z: old } = a {
                        *old = z;
                        found = true;
                    }
                }
                if !found {
                    return Err(Error::config("lie_z sweep needs at least one lie worker"));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: String,
    pub seed: u64,
    pub output: RunOutput,
}

/// Run every `(value, seed)` pair. Results come back in value-major order
/// regardless of how the runs were scheduled.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[String], seeds: &[u64]) -> Result<Vec<SweepRun>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    if seeds.is_empty() {
        return Err(Error::config("sweep needs at least one seed"));
    }
    let mut jobs = Vec::with_capacity(values.len() * seeds.len());
    for v in values {
        let cfg = axis.apply(base, v)?;
        for &s in seeds {
            jobs.push((v.clone(), cfg.clone().with_seed(s)));
        }
    }
    execute(jobs)
}

#[cfg(feature = "parallel")]
fn execute(jobs: Vec<(String, RunConfig)>) -> Result<Vec<SweepRun>> {
    use rayon::prelude::*;
    jobs.into_par_iter()
        .map(|(value, cfg)| {
            run(&cfg).map(|output| SweepRun {
                value,
                seed: cfg.seed,
                output,
            })
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn execute(jobs: Vec<(String, RunConfig)>) -> Result<Vec<SweepRun>> {
    jobs.into_iter()
        .map(|(value, cfg)| {
            run(&cfg).map(|output| SweepRun {
                value,
                seed: cfg.seed,
                output,
            })
        })
        .collect()
}

/// Mean final test loss per axis value, in first-seen value order.
pub fn mean_final_test_loss(runs: &[SweepRun]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64, usize)> = Vec::new();
    for r in runs {
        let loss = r.output.last().test_loss;
        match out.iter_mut().find(|(v, _, _)| *v == r.value) {
            Some(e) => {
                e.1 += loss;
                e.2 += 1;
            }
            None => out.push((r.value.clone(), loss, 1)),
        }
    }
    out.into_iter().map(|(v, s, n)| (v, s / n as f64)).collect()
}

pub fn write_table<W: Write>(axis: SweepAxis, runs: &[SweepRun], mut out: W) -> Result<()> {
    writeln!(
        out,
        "{},seed,t,train_loss,test_loss,test_accuracy,dist_to_opt",
        axis.name()
    )?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in runs {
        let last = r.output.last();
        // quote values that contain the separator
        let value = if r.value.contains(',') {
            format!("\"{}\"", r.value)
        } else {
            r.value.clone()
        };
        writeln!(
            out,
            "{value},{},{},{},{},{},{}",
            r.seed,
            last.t,
            last.train_loss,
            last.test_loss,
            opt(last.test_accuracy),
            opt(last.dist_to_opt)
        )?;
    }
    Ok(())
}
