//! Scores learn the sign of each worker's gradient multiplier.

use bygars::adversary::AttackSpec;
use bygars::aggregate::AggregatorKind;
use bygars::harness::{run, RunConfig};

const BURN_IN: usize = 50;

fn scores(kind: AggregatorKind, kappa: &[f64], kappa_std: f64, seed: u64) -> Vec<(usize, Vec<f64>)> {
    let attacks = kappa.iter().map(|&k| AttackSpec::scaled(k, kappa_std, 10.0)).collect();
    let mut cfg = RunConfig::theorem_preset(attacks).with_seed(seed).with_iterations(1000);
    cfg.aggregator.kind = kind;
    cfg.eval_every = 1;
    let out = run(&cfg).unwrap();
    out.records.into_iter().map(|r| (r.t, r.q)).collect()
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn check(kind: AggregatorKind, kappa: &[f64], kappa_std: f64) {
    for seed in 0..3 {
        let qs = scores(kind, kappa, kappa_std, seed);
        for (i, &k) in kappa.iter().enumerate() {
            let path: Vec<f64> = qs.iter().map(|(_, q)| q[i]).collect();
            let steps: Vec<f64> = path.windows(2).map(|p| p[1] - p[0]).collect();
            let eps = 3.0 * sd(&steps);
            for (t, q) in qs.iter().filter(|(t, _)| *t >= BURN_IN) {
                if k == 0.0 {
                    assert!(q[i].abs() <= eps, "{kind} seed {seed} t {t}: |q[{i}]| = {} > {eps}", q[i].abs());
                } else {
                    assert_eq!(q[i].signum(), k.signum(), "{kind} seed {seed} t {t}: q[{i}] = {}", q[i]);
                }
            }
        }
    }
}

#[test]
fn bygars_pp_scores_match_multiplier_signs() {
    check(AggregatorKind::BygarsPp, &[2.0, -1.0, 0.0, 1.0, -0.5, 0.0], 0.0);
}

#[test]
fn bygars_scores_match_multiplier_signs() {
    check(AggregatorKind::Bygars, &[2.0, -1.0, 0.0, 1.0, -0.5, 0.0], 0.0);
}

#[test]
fn signs_survive_noisy_multipliers() {
    check(AggregatorKind::BygarsPp, &[1.5, -1.0, 1.0, -2.0], 0.5);
}
