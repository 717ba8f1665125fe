//! Driver for the theory checks in theorem-check mode.

use std::io::Write;

use super::config::{Mode, RunConfig};
use super::run::{run_setup, Setup};
use crate::error::{Error, Result};
use crate::verify::{
    byz_tolerance_statistic, convergence_check, equilibrium_scaling_check, martingale_noise_check, q_recursion_check,
    CheckName, TheoremCheckReport,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Monte Carlo rounds per tested point (q_recursion, martingale).
    pub n_trials: usize,
    /// Length of the frozen-w score iteration.
    pub equilibrium_iterations: usize,
    /// Independent score trajectories averaged by the equilibrium check.
    pub equilibrium_trials: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            equilibrium_iterations: 5000,
            equilibrium_trials: 32,
        }
    }
}

/// Run the requested checks against one config. The training run is only
/// executed when a trace-based check asks for it. Frozen points are `w_0`
/// and the midpoint between `w_0` and `w*`, with `q = 0`.
pub fn verify_cmd(config: &RunConfig, checks: &[CheckName], opts: &VerifyOptions) -> Result<Vec<TheoremCheckReport>> {
    if checks.is_empty() {
        return Err(Error::config("no checks requested"));
    }
    if config.mode != Mode::TheoremCheck {
        return Err(Error::config("verify needs mode = \"theorem_check\""));
    }
    let setup = Setup::new(config)?;
    let needs_trace = checks.iter().any(|c| {
        matches!(
            c,
            CheckName::ByzTolerance | CheckName::Martingale | CheckName::Convergence
        )
    });
    let trace = if needs_trace { run_setup(&setup)?.trace } else { None };
    let trace = trace.as_ref();
    let w0 = setup.w0.as_slice().to_vec();
    let w_star = setup
        .w_star
        .as_ref()
        .ok_or_else(|| Error::config("theory checks need a regression task with a closed-form optimum"))?;
    let midpoint: Vec<f64> = w0.iter().zip(w_star.as_slice()).map(|(a, b)| (a + b) / 2.0).collect();

    let mut reports = Vec::with_capacity(checks.len());
    for check in checks {
        let report = match check {
            CheckName::ByzTolerance => byz_tolerance_statistic(config, trace.expect("trace recorded"))?,
            CheckName::QRecursion => q_recursion_check(&setup, &w0, &vec![0.0; config.m], 0, opts.n_trials)?,
            CheckName::Equilibrium => equilibrium_scaling_check(
                &setup,
                &w0,
                &midpoint,
                opts.equilibrium_iterations,
                opts.equilibrium_trials,
            )?,
            CheckName::Martingale => martingale_noise_check(&setup, trace.expect("trace recorded"), opts.n_trials)?,
            CheckName::Convergence => convergence_check(config, trace.expect("trace recorded"))?,
        };
        reports.push(report);
    }
    Ok(reports)
}

/// One JSON record per line.
pub fn write_reports<W: Write>(reports: &[TheoremCheckReport], mut out: W) -> Result<()> {
    for r in reports {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}
