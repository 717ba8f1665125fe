//! Monte Carlo checks of the method's theoretical guarantees.
//!
//! All checks run in theorem-check mode: raw (unnormalized) gradients,
//! workers that fit the multiplicative-noise model `E[h_i] = kappa_i grad F`,
//! and every mini-batch drawn from the full training set, so the
//! full-training-set gradient is exactly the mean of every stochastic
//! gradient. Each Monte Carlo trial owns streams keyed by (check, trial), so
//! reports do not depend on thread scheduling.

use serde::Serialize;

use crate::aggregate::AggregatorKind;
use crate::data::sample_batch;
use crate::error::{Error, Result};
use crate::harness::config::Mode;
use crate::harness::{RunConfig, Setup, Trace};
use crate::rng::RngStream;
use crate::schedule::alpha_at;
use crate::vector::{dot, norm, GradientBatch};

pub const BURN_IN: usize = 50;
pub const WINDOW: usize = 200;
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    ByzTolerance,
    QRecursion,
    Equilibrium,
    Martingale,
    Convergence,
}

impl CheckName {
    pub const ALL: [CheckName; 5] = [
        CheckName::ByzTolerance,
        CheckName::QRecursion,
        CheckName::Equilibrium,
        CheckName::Martingale,
        CheckName::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckName::ByzTolerance => "byz_tolerance",
            CheckName::QRecursion => "q_recursion",
            CheckName::Equilibrium => "equilibrium",
            CheckName::Martingale => "martingale",
            CheckName::Convergence => "convergence",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name).ok_or_else(|| {
            let known: Vec<&str> = Self::ALL.iter().map(|c| c.name()).collect();
            Error::config(format!("unknown check {name:?} (known: {})", known.join(", ")))
        })
    }
}

/// One tested quantity: an estimate, what it was compared with, and its
/// Monte Carlo standard error (zero for deterministic quantities).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub label: String,
    pub estimate: f64,
    pub reference: f64,
    pub std_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremCheckReport {
    pub check: CheckName,
    pub passed: bool,
    /// The pass rule, including its sample count.
    pub tolerance: String,
    /// Monte Carlo trials, or iterations for trace-based checks.
    pub samples: usize,
    /// Headline number (relative error, distance ratio, ...).
    pub statistic: f64,
    pub verdicts: Vec<Verdict>,
    /// Per-iteration values for trace-based checks.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub running_mean: Vec<f64>,
    pub notes: Vec<String>,
}

impl TheoremCheckReport {
    fn new(check: CheckName, tolerance: String, samples: usize, statistic: f64, verdicts: Vec<Verdict>) -> Self {
        let passed = !verdicts.is_empty() && verdicts.iter().all(|v| v.passed);
        Self {
            check,
            passed,
            tolerance,
            samples,
            statistic,
            verdicts,
            values: Vec::new(),
            running_mean: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report fields serialize")
    }

    pub fn summary(&self) -> String {
        let failed = self.verdicts.iter().filter(|v| !v.passed).count();
        format!(
            "{:<14} {}  statistic {:.6}  ({} of {} verdicts failed; {})",
            self.check.name(),
            if self.passed { "PASS" } else { "FAIL" },
            self.statistic,
            failed,
            self.verdicts.len(),
            self.tolerance
        )
    }
}

/// Sample mean and standard error of the mean, per coordinate.
pub fn mean_and_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let dim = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(s).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let se = var
        .into_iter()
        .map(|ss| if n > 1.0 { (ss / (n - 1.0) / n).sqrt() } else { 0.0 })
        .collect();
    (mean, se)
}

/// `|estimate - reference| <= k * se`, or a relative 1e-10 match when the
/// quantity has no sampling noise.
fn within(estimate: f64, reference: f64, se: f64, k: f64) -> bool {
    let diff = (estimate - reference).abs();
    diff <= k * se || diff <= 1e-10 * reference.abs().max(1.0)
}

/// Deviation in standard errors; zero for deterministic matches.
fn z_score(estimate: f64, reference: f64, se: f64) -> f64 {
    let diff = (estimate - reference).abs();
    if diff <= 1e-10 * reference.abs().max(1.0) || se == 0.0 {
        0.0
    } else {
        diff / se
    }
}

fn require_theorem_mode(cfg: &RunConfig) -> Result<Vec<f64>> {
    if cfg.mode != Mode::TheoremCheck {
        return Err(Error::config("theory checks need mode = \"theorem_check\""));
    }
    cfg.kappa()
        .ok_or_else(|| Error::config("theory checks need multiplicative-noise workers with known kappa"))
}

#[cfg(feature = "parallel")]
fn trials<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn trials<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).map(f).collect()
}

/// Streams for one round of one trial.
struct RoundStreams {
    workers: Vec<RngStream>,
    aux: RngStream,
}

impl RoundStreams {
    fn keyed(seed: u64, check: &str, m: usize, trial: u64) -> Self {
        RoundStreams {
            workers: (0..m)
                .map(|j| RngStream::keyed(seed, &format!("{check}/worker/{j}"), trial))
                .collect(),
            aux: RngStream::keyed(seed, &format!("{check}/aux"), trial),
        }
    }
}

fn draw(pool: &[usize], batch: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if batch == pool.len() {
        Ok(pool.to_vec())
    } else {
        sample_batch(pool, batch, rng)
    }
}

/// One theorem-mode round at `w`: the raw gradient matrix and a raw
/// auxiliary gradient.
fn round(setup: &Setup, w: &[f64], streams: &mut RoundStreams) -> Result<(GradientBatch, Vec<f64>)> {
    let cfg = &setup.config;
    let mut rows = Vec::with_capacity(cfg.m);
    for (j, attack) in cfg.attacks.iter().enumerate() {
        let rng = &mut streams.workers[j];
        let batch = draw(setup.worker_rows(j), cfg.batch_size, rng)?;
        let h = setup.objective.gradient(w, &setup.dataset, &batch)?;
        rows.push(attack.apply_local(h, rng));
    }
    let batch = draw(setup.aux_rows(), cfg.aux_batch_size, &mut streams.aux)?;
    let g = setup.objective.gradient(w, &setup.dataset, &batch)?;
    Ok((GradientBatch::from_rows(rows)?, g))
}

/// Windowed test of `E[<grad F(w_t), H_t^T q_t>] >= 0` on a ByGARS++ trace:
/// after burn-in, every full window's mean must be at least -3 standard
/// errors.
pub fn byz_tolerance_statistic(cfg: &RunConfig, trace: &Trace) -> Result<TheoremCheckReport> {
    require_theorem_mode(cfg)?;
    if cfg.aggregator.kind != AggregatorKind::BygarsPp {
        return Err(Error::config("byz_tolerance needs the bygars_pp aggregator"));
    }
    let s = &trace.byz_stat;
    if s.len() < BURN_IN + WINDOW {
        return Err(Error::config(format!(
            "byz_tolerance needs at least {} iterations",
            BURN_IN + WINDOW
        )));
    }
    let mut verdicts = Vec::new();
    let mut start = BURN_IN;
    while start + WINDOW <= s.len() {
        let window: Vec<Vec<f64>> = s[start..start + WINDOW].iter().map(|v| vec![*v]).collect();
        let (mean, se) = mean_and_se(&window);
        verdicts.push(Verdict {
            label: format!("window {start}..{}", start + WINDOW),
            estimate: mean[0],
            reference: 0.0,
            std_error: se[0],
            passed: mean[0] >= -3.0 * se[0],
        });
        start += WINDOW;
    }
    let mut running = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    for (i, v) in s.iter().enumerate() {
        acc += v;
        running.push(acc / (i + 1) as f64);
    }
    let after = &s[BURN_IN..];
    let mean_after = after.iter().sum::<f64>() / after.len() as f64;
    let mut report = TheoremCheckReport::new(
        CheckName::ByzTolerance,
        format!(
            "every window mean >= -3 SE (window {WINDOW}, burn-in {BURN_IN}, {} iterations)",
            s.len()
        ),
        s.len(),
        mean_after,
        verdicts,
    );
    report.values = s.clone();
    report.running_mean = running;
    Ok(report)
}

/// Monte Carlo test of `E[q_{t+1} | q_t, w] = (1 - a) q_t + a ||grad F(w)||^2 kappa`
/// at a frozen `w`, per coordinate within 4 standard errors.
pub fn q_recursion_check(setup: &Setup, w: &[f64], q: &[f64], t: usize, n_trials: usize) -> Result<TheoremCheckReport> {
    let kappa = require_theorem_mode(&setup.config)?;
    if n_trials < MIN_TRIALS {
        return Err(Error::config(format!("q_recursion needs n_trials >= {MIN_TRIALS}")));
    }
    if q.len() != kappa.len() {
        return Err(Error::Dimension {
            expected: kappa.len(),
            got: q.len(),
        });
    }
    let alpha = alpha_at(&setup.config.schedule, t as u64);
    let gf = setup.full_gradient(w)?;
    let gf2 = dot(&gf, &gf);
    let seed = setup.config.seed;
    let samples = trials(n_trials, |i| {
        let mut streams = RoundStreams::keyed(seed, "q_recursion", kappa.len(), i as u64);
        let (h, g) = round(setup, w, &mut streams)?;
        let p = h.project(&g)?;
        Ok(q.iter()
            .zip(p)
            .map(|(qi, pi)| (1.0 - alpha) * qi + alpha * pi)
            .collect::<Vec<f64>>())
    })?;
    let (mean, se) = mean_and_se(&samples);
    let verdicts: Vec<Verdict> = (0..q.len())
        .map(|i| {
            let reference = (1.0 - alpha) * q[i] + alpha * gf2 * kappa[i];
            Verdict {
                label: format!("q[{i}]"),
                estimate: mean[i],
                reference,
                std_error: se[i],
                passed: within(mean[i], reference, se[i], 4.0),
            }
        })
        .collect();
    let worst = verdicts
        .iter()
        .map(|v| z_score(v.estimate, v.reference, v.std_error))
        .fold(0.0, f64::max);
    let mut report = TheoremCheckReport::new(
        CheckName::QRecursion,
        format!("every coordinate within 4 SE ({n_trials} trials, alpha = {alpha})"),
        n_trials,
        worst,
        verdicts,
    );
    report
        .notes
        .push("statistic: largest |estimate - reference| in standard errors".into());
    Ok(report)
}

/// Result of iterating the score update alone at a frozen `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub report: TheoremCheckReport,
    /// Trial-averaged `q_T`.
    pub q_mean: Vec<f64>,
    /// `kappa * ||grad F(w)||^2`.
    pub target: Vec<f64>,
}

/// Iterate `q <- (1 - a_t) q + a_t H_t g_t` for `n_iterations` at frozen
/// `w`, average `q_T` over trials, and compare with `kappa ||grad F(w)||^2`
/// (relative error at most 5%).
pub fn equilibrium_check(setup: &Setup, w: &[f64], n_iterations: usize, n_trials: usize) -> Result<Equilibrium> {
    let kappa = require_theorem_mode(&setup.config)?;
    if kappa.iter().all(|k| *k == 0.0) {
        return Err(Error::config(
            "kappa = 0: the equilibrium is the origin, test |q_T| <= 1e-3 instead",
        ));
    }
    if n_iterations == 0 || n_trials < 2 {
        return Err(Error::config("equilibrium needs n_iterations >= 1 and n_trials >= 2"));
    }
    let gf = setup.full_gradient(w)?;
    let gf2 = dot(&gf, &gf);
    let target: Vec<f64> = kappa.iter().map(|k| k * gf2).collect();
    let samples: Vec<Vec<f64>> = score_trials(setup, w, n_iterations, n_trials, n_iterations)?
        .into_iter()
        .map(|mut snaps| snaps.pop().expect("final snapshot"))
        .collect();
    let (mean, se) = mean_and_se(&samples);
    let diff: Vec<f64> = mean.iter().zip(&target).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&target);
    let mut verdicts = vec![Verdict {
        label: "relative error".into(),
        estimate: rel,
        reference: 0.05,
        std_error: 0.0,
        passed: rel <= 0.05,
    }];
    verdicts.extend((0..mean.len()).map(|i| Verdict {
        label: format!("q[{i}] / ||grad F||^2"),
        estimate: mean[i] / gf2,
        reference: kappa[i],
        std_error: se[i] / gf2,
        // informational; the pass rule is the relative error above
        passed: true,
    }));
    let report = TheoremCheckReport::new(
        CheckName::Equilibrium,
        format!("||q_T - phi(w)|| / ||phi(w)|| <= 0.05 (T = {n_iterations}, {n_trials} trials)"),
        n_trials,
        rel,
        verdicts,
    );
    Ok(Equilibrium {
        report,
        q_mean: mean,
        target,
    })
}

/// Per-trial snapshots of `q` at `t = 0, every, 2 every, ..., n_iterations`
/// for the score update alone at frozen `w`, starting from `q = 0`.
fn score_trials(
    setup: &Setup,
    w: &[f64],
    n_iterations: usize,
    n_trials: usize,
    every: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let m = setup.config.m;
    let seed = setup.config.seed;
    let schedule = setup.config.schedule;
    let every = every.max(1);
    trials(n_trials, |i| {
        let mut streams = RoundStreams::keyed(seed, "equilibrium", m, i as u64);
        let mut q = vec![0.0; m];
        let mut snaps = vec![q.clone()];
        for t in 0..n_iterations {
            let alpha = alpha_at(&schedule, t as u64);
            let (h, g) = round(setup, w, &mut streams)?;
            let p = h.project(&g)?;
            for (qi, pi) in q.iter_mut().zip(p) {
                *qi = (1.0 - alpha) * *qi + alpha * pi;
            }
            if (t + 1) % every == 0 || t + 1 == n_iterations {
                snaps.push(q.clone());
            }
        }
        Ok(snaps)
    })
}

/// Trial-averaged score trajectory at frozen `w`: `(t, mean q_t)` pairs,
/// sampled every `every` iterations and at the end.
pub fn equilibrium_path(
    setup: &Setup,
    w: &[f64],
    n_iterations: usize,
    n_trials: usize,
    every: usize,
) -> Result<Vec<(usize, Vec<f64>)>> {
    require_theorem_mode(&setup.config)?;
    if n_trials == 0 {
        return Err(Error::config("equilibrium_path needs n_trials >= 1"));
    }
    let runs = score_trials(setup, w, n_iterations, n_trials, every)?;
    let every = every.max(1);
    let steps = (0..runs[0].len()).map(|k| (k * every).min(n_iterations));
    Ok(steps
        .enumerate()
        .map(|(k, t)| {
            let at: Vec<Vec<f64>> = runs.iter().map(|r| r[k].clone()).collect();
            (t, mean_and_se(&at).0)
        })
        .collect())
}

/// Equilibria at two frozen points, plus the check that `||q_T||` scales
/// like `||grad F(w)||^2` (ratio within 10%).
pub fn equilibrium_scaling_check(
    setup: &Setup,
    w1: &[f64],
    w2: &[f64],
    n_iterations: usize,
    n_trials: usize,
) -> Result<TheoremCheckReport> {
    let a = equilibrium_check(setup, w1, n_iterations, n_trials)?;
    let b = equilibrium_check(setup, w2, n_iterations, n_trials)?;
    let measured = norm(&a.q_mean) / norm(&b.q_mean);
    let g1 = setup.full_gradient(w1)?;
    let g2 = setup.full_gradient(w2)?;
    let predicted = dot(&g1, &g1) / dot(&g2, &g2);
    let ratio_err = (measured / predicted - 1.0).abs();
    let mut verdicts = vec![
        Verdict {
            label: "w1 relative error".into(),
            estimate: a.report.statistic,
            reference: 0.05,
            std_error: 0.0,
            passed: a.report.passed,
        },
        Verdict {
            label: "w2 relative error".into(),
            estimate: b.report.statistic,
            reference: 0.05,
            std_error: 0.0,
            passed: b.report.passed,
        },
        Verdict {
            label: "||q_T(w1)|| / ||q_T(w2)||".into(),
            estimate: measured,
            reference: predicted,
            std_error: 0.0,
            passed: ratio_err <= 0.10,
        },
    ];
    verdicts.extend(a.report.verdicts.into_iter().skip(1).map(|mut v| {
        v.label = format!("w1 {}", v.label);
        v
    }));
    verdicts.extend(b.report.verdicts.into_iter().skip(1).map(|mut v| {
        v.label = format!("w2 {}", v.label);
        v
    }));
    Ok(TheoremCheckReport::new(
        CheckName::Equilibrium,
        format!(
            "relative error <= 0.05 at both points and norm ratio within 10% of the squared-gradient ratio (T = {n_iterations}, {n_trials} trials)"
        ),
        n_trials,
        a.report.statistic.max(b.report.statistic),
        verdicts,
    ))
}

/// Zero-mean test of the noise sequences
/// `u = (kappa^T q) grad F - H^T q` and `v = H g - kappa ||grad F||^2`
/// at each recorded checkpoint, per coordinate within 4 standard errors.
pub fn martingale_noise_check(setup: &Setup, trace: &Trace, n_trials: usize) -> Result<TheoremCheckReport> {
    let kappa = require_theorem_mode(&setup.config)?;
    if n_trials < MIN_TRIALS {
        return Err(Error::config(format!("martingale needs n_trials >= {MIN_TRIALS}")));
    }
    if trace.checkpoints.is_empty() {
        return Err(Error::config("martingale needs a trace with checkpoints"));
    }
    let seed = setup.config.seed;
    let m = kappa.len();
    let mut verdicts = Vec::new();
    let mut worst = 0.0f64;
    for cp in &trace.checkpoints {
        let gf = setup.full_gradient(&cp.w)?;
        let gf2 = dot(&gf, &gf);
        let kq = dot(&kappa, &cp.q);
        let label = format!("martingale/t{}", cp.t);
        let samples = trials(n_trials, |i| {
            let mut streams = RoundStreams::keyed(seed, &label, m, i as u64);
            let (h, g) = round(setup, &cp.w, &mut streams)?;
            let hq = h.weighted_sum(&cp.q)?;
            let mut out: Vec<f64> = gf.iter().zip(&hq).map(|(f, s)| kq * f - s).collect();
            let p = h.project(&g)?;
            out.extend(p.iter().zip(&kappa).map(|(pi, k)| pi - k * gf2));
            Ok(out)
        })?;
        let (mean, se) = mean_and_se(&samples);
        let d = gf.len();
        for (i, (mu, s)) in mean.iter().zip(&se).enumerate() {
            let name = if i < d {
                format!("t={} u[{i}]", cp.t)
            } else {
                format!("t={} v[{}]", cp.t, i - d)
            };
            worst = worst.max(z_score(*mu, 0.0, *s));
            verdicts.push(Verdict {
                label: name,
                estimate: *mu,
                reference: 0.0,
                std_error: *s,
                passed: within(*mu, 0.0, *s, 4.0),
            });
        }
    }
    let mut report = TheoremCheckReport::new(
        CheckName::Martingale,
        format!(
            "every coordinate mean within 4 SE of 0 ({n_trials} trials at each of {} checkpoints)",
            trace.checkpoints.len()
        ),
        n_trials,
        worst,
        verdicts,
    );
    report.notes.push("statistic: largest |mean| in standard errors".into());
    Ok(report)
}

/// `||w_T - w*|| / ||w_0 - w*|| <= 0.05` on a recorded trace.
pub fn convergence_check(cfg: &RunConfig, trace: &Trace) -> Result<TheoremCheckReport> {
    require_theorem_mode(cfg)?;
    let d = &trace.distances;
    if d.len() < 2 {
        return Err(Error::config("convergence needs a distance trajectory (regression w*)"));
    }
    let ratio = d[d.len() - 1] / d[0];
    let verdicts = vec![Verdict {
        label: "||w_T - w*|| / ||w_0 - w*||".into(),
        estimate: ratio,
        reference: 0.05,
        std_error: 0.0,
        passed: ratio <= 0.05,
    }];
    let mut report = TheoremCheckReport::new(
        CheckName::Convergence,
        format!("distance ratio <= 0.05 after {} iterations", d.len() - 1),
        d.len() - 1,
        ratio,
        verdicts,
    );
    if !cfg.schedule.is_two_timescale() {
        report.notes.push(format!(
            "warning: schedules do not satisfy gamma_t / alpha_t -> 0 with exponents in (1/2, 1] (gamma exponent {}, alpha exponent {})",
            cfg.schedule.gamma_exponent, cfg.schedule.alpha_exponent
        ));
    }
    if cfg.aggregator.kind != AggregatorKind::BygarsPp {
        report.notes.push(format!(
            "note: the convergence result is stated for bygars_pp, not {}",
            cfg.aggregator.kind
        ));
    }
    report.values = d.clone();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AttackSpec;
    use crate::harness::run_setup;

    fn setup(attacks: Vec<AttackSpec>) -> Setup {
        let mut cfg = RunConfig::theorem_preset(attacks);
        cfg.task.n = 1500;
        cfg.task.n_test = 200;
        cfg.task.n_aux = 100;
        Setup::new(&cfg).unwrap()
    }

    #[test]
    fn deterministic_q_recursion_is_exact() {
        let mut s = setup(vec![
            AttackSpec::Benign,
            AttackSpec::sign_flip(),
            AttackSpec::scaled(0.5, 0.0, 2.0),
        ]);
        s.config.batch_size = s.training_rows.len();
        s.config.aux_batch_size = s.training_rows.len();
        let w = s.w0.as_slice().to_vec();
        let q = vec![0.3, -0.2, 0.1];
        let r = q_recursion_check(&s, &w, &q, 0, MIN_TRIALS).unwrap();
        assert!(r.passed, "{r:?}");
        for v in &r.verdicts {
            assert!(v.std_error <= 1e-12 * v.reference.abs().max(1.0));
            assert!((v.estimate - v.reference).abs() <= 1e-10 * v.reference.abs().max(1.0));
        }
    }

    #[test]
    fn zero_alpha_keeps_q() {
        let mut s = setup(vec![AttackSpec::Benign; 2]);
        s.config.schedule.alpha0 = 1e-300;
        let w = s.w0.as_slice().to_vec();
        let r = q_recursion_check(&s, &w, &[0.7, -0.4], 0, MIN_TRIALS).unwrap();
        assert!((r.verdicts[0].estimate - 0.7).abs() < 1e-12);
        assert!((r.verdicts[1].estimate + 0.4).abs() < 1e-12);
    }

    #[test]
    fn check_preconditions() {
        let s = setup(vec![AttackSpec::Benign; 2]);
        let w = s.w0.as_slice().to_vec();
        assert!(q_recursion_check(&s, &w, &[0.0, 0.0], 0, 99).unwrap_err().is_config());
        assert!(q_recursion_check(&s, &w, &[0.0], 0, 100).is_err());
        assert!(CheckName::from_name("krum").is_err());

        let zero = setup(vec![AttackSpec::Benign, AttackSpec::scaled(0.0, 0.0, 1.0)]);
        let mut z = zero.clone();
        z.config.attacks = vec![AttackSpec::scaled(0.0, 0.0, 1.0); 2];
        assert!(equilibrium_check(&z, &w, 10, 2).is_err());

        let mut cfg = s.config.clone();
        cfg.aggregator.kind = AggregatorKind::Bygars;
        assert!(byz_tolerance_statistic(&cfg, &Trace::default()).is_err());
        let mut emp = s.config.clone();
        emp.mode = Mode::Empirical;
        assert!(convergence_check(&emp, &Trace::default()).is_err());
    }

    #[test]
    fn deterministic_noise_is_zero() {
        let mut s = setup(vec![AttackSpec::Benign, AttackSpec::sign_flip()]);
        s.config.iterations = 30;
        s.config.batch_size = s.training_rows.len();
        s.config.aux_batch_size = s.training_rows.len();
        let out = run_setup(&s).unwrap();
        let r = martingale_noise_check(&s, out.trace.as_ref().unwrap(), MIN_TRIALS).unwrap();
        assert!(r.passed, "{}", r.summary());
        assert!(r.verdicts.iter().all(|v| v.std_error < 1e-9 && v.estimate.abs() < 1e-9));
    }

    #[test]
    fn single_benign_equilibrium_without_noise() {
        let mut s = setup(vec![AttackSpec::Benign]);
        s.config.batch_size = s.training_rows.len();
        s.config.aux_batch_size = s.training_rows.len();
        let w = s.w0.as_slice().to_vec();
        let e = equilibrium_check(&s, &w, 2000, 2).unwrap();
        assert!(e.report.statistic < 1e-6, "{}", e.report.statistic);
    }

    #[test]
    fn byz_statistic_starts_at_zero_and_reports_are_reproducible() {
        let mut s = setup(vec![AttackSpec::Benign; 4]);
        s.config.iterations = 450;
        let out = run_setup(&s).unwrap();
        let tr = out.trace.unwrap();
        let r = byz_tolerance_statistic(&s.config, &tr).unwrap();
        assert_eq!(r.values[0], 0.0);
        assert_eq!(r.verdicts.len(), 2);
        assert!(r.passed);
        let again = byz_tolerance_statistic(&s.config, &run_setup(&s).unwrap().trace.unwrap()).unwrap();
        assert_eq!(r.to_json_line(), again.to_json_line());

        let w = s.w0.as_slice().to_vec();
        let a = q_recursion_check(&s, &w, &[0.0; 4], 0, 200).unwrap();
        let b = q_recursion_check(&s, &w, &[0.0; 4], 0, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn path_ends_at_the_checked_mean() {
        let s = setup(vec![AttackSpec::Benign, AttackSpec::scaled(-1.0, 0.0, 5.0)]);
        let w = s.w0.as_slice().to_vec();
        let path = equilibrium_path(&s, &w, 25, 3, 10).unwrap();
        let ts: Vec<usize> = path.iter().map(|(t, _)| *t).collect();
        assert_eq!(ts, [0, 10, 20, 25]);
        assert_eq!(path[0].1, vec![0.0, 0.0]);
        let e = equilibrium_check(&s, &w, 25, 3).unwrap();
        assert_eq!(path[3].1, e.q_mean);
    }

    #[test]
    fn mean_and_se_oracle() {
        let (m, se) = mean_and_se(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        assert_eq!(m, vec![2.5]);
        // sample variance 5/3, se = sqrt(5/3 / 4)
        assert!((se[0] - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
