//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes and returns JSON text. The `*_json` functions do the
//! work and are plain Rust so they can be tested natively.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use bygars::harness::{parse_attack_set, run, RunConfig, Setup};
use bygars::schedule::{alpha_at, gamma_at};
use bygars::verify::equilibrium_path;
use bygars::{AggregatorKind, AttackSpec, ScheduleSpec, TaskKind};

const MAX_ITERATIONS: usize = 20_000;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub task: TaskKind,
    pub aggregators: Vec<String>,
    /// `mixed` or counts such as `benign:2+sign_flip:6`.
    pub attacks: String,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Serialize)]
pub struct Curve {
    pub aggregator: String,
    pub t: Vec<usize>,
    pub test_loss: Vec<f64>,
    pub test_accuracy: Option<Vec<f64>>,
    /// Score vector at each recorded step (empty rows for score-free kinds).
    pub q: Vec<Vec<f64>>,
}

#[derive(Serialize)]
pub struct SimulateResponse {
    pub workers: Vec<String>,
    pub curves: Vec<Curve>,
}

pub fn simulate_json(request: &str) -> Result<String, String> {
    let req: SimulateRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let attacks = parse_attack_set(&req.attacks).map_err(|e| e.to_string())?;
    if req.aggregators.is_empty() {
        return Err("pick at least one aggregator".into());
    }
    let mut curves = Vec::new();
    for name in &req.aggregators {
        let kind = AggregatorKind::from_name(name).map_err(|e| e.to_string())?;
        let mut cfg = RunConfig::preset(req.task, kind, attacks.clone()).with_seed(req.seed);
        if let Some(t) = req.iterations {
            cfg = cfg.with_iterations(t.clamp(1, MAX_ITERATIONS));
        }
        cfg.eval_every = (cfg.iterations / 100).max(1);
        let out = run(&cfg).map_err(|e| e.to_string())?;
        let uses_q = kind.uses_reputation();
        curves.push(Curve {
            aggregator: kind.name().to_string(),
            t: out.records.iter().map(|r| r.t).collect(),
            test_loss: out.records.iter().map(|r| r.test_loss).collect(),
            test_accuracy: out.records.iter().map(|r| r.test_accuracy).collect(),
            q: out
                .records
                .iter()
                .map(|r| if uses_q { r.q.clone() } else { Vec::new() })
                .collect(),
        });
    }
    let workers = attacks.iter().map(|a| a.name().to_string()).collect();
    serde_json::to_string(&SimulateResponse { workers, curves }).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRequest {
    pub schedule: ScheduleSpec,
    pub iterations: u64,
}

#[derive(Serialize)]
pub struct ScheduleResponse {
    pub t: Vec<u64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub two_timescale: bool,
}

pub fn schedules_json(request: &str) -> Result<String, String> {
    let req: ScheduleRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    req.schedule.validate().map_err(|e| e.to_string())?;
    let n = req.iterations.clamp(1, 1_000_000);
    let step = (n / 200).max(1);
    let t: Vec<u64> = (0..=n).step_by(step as usize).collect();
    let resp = ScheduleResponse {
        gamma: t.iter().map(|&t| gamma_at(&req.schedule, t)).collect(),
        alpha: t.iter().map(|&t| alpha_at(&req.schedule, t)).collect(),
        two_timescale: req.schedule.is_two_timescale(),
        t,
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumRequest {
    pub kappa: Vec<f64>,
    pub iterations: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Serialize)]
pub struct EquilibriumResponse {
    pub t: Vec<usize>,
    /// Trial-averaged scores divided by `||grad F(w)||^2`; tends to kappa.
    pub q_scaled: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
}

pub fn equilibrium_json(request: &str) -> Result<String, String> {
    let req: EquilibriumRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.kappa.is_empty() || req.kappa.len() > 16 {
        return Err("kappa needs 1 to 16 entries".into());
    }
    let attacks = req.kappa.iter().map(|&k| AttackSpec::scaled(k, 0.0, 10.0)).collect();
    let mut cfg = RunConfig::theorem_preset(attacks).with_seed(req.seed);
    // a smaller dataset keeps the page responsive
    cfg.task.n = 3000;
    cfg.task.n_test = 300;
    cfg.task.n_aux = 100;
    let setup = Setup::new(&cfg).map_err(|e| e.to_string())?;
    let w = setup.w0.as_slice().to_vec();
    let grad = setup.full_gradient(&w).map_err(|e| e.to_string())?;
    let scale: f64 = grad.iter().map(|g| g * g).sum();
    let iterations = req.iterations.clamp(1, MAX_ITERATIONS);
    let every = (iterations / 200).max(1);
    let path = equilibrium_path(&setup, &w, iterations, req.trials.clamp(1, 64), every).map_err(|e| e.to_string())?;
    let (t, q_scaled) = path
        .into_iter()
        .map(|(t, q)| (t, q.into_iter().map(|v| v / scale).collect()))
        .unzip();
    serde_json::to_string(&EquilibriumResponse {
        t,
        q_scaled,
        kappa: cfg.kappa().unwrap_or_default(),
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsValue> {
    simulate_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn schedules(request: &str) -> Result<String, JsValue> {
    schedules_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn equilibrium(request: &str) -> Result<String, JsValue> {
    equilibrium_json(request).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn simulate_returns_one_curve_per_aggregator() {
        let out = simulate_json(
            r#"{"task":"regression","aggregators":["average","bygars_pp"],"attacks":"benign:2+sign_flip:2","iterations":200}"#,
        )
        .unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        let curves = v["curves"].as_array().unwrap();
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0]["t"].as_array().unwrap().len(), 101);
        assert!(curves[0]["q"][5].as_array().unwrap().is_empty());
        assert_eq!(curves[1]["q"][5].as_array().unwrap().len(), 4);
        assert_eq!(v["workers"][3], "sign_flip");
    }

    #[test]
    fn bad_requests_are_errors() {
        assert!(simulate_json(r#"{"task":"regression","aggregators":[],"attacks":"benign:2"}"#).is_err());
        assert!(simulate_json(r#"{"task":"regression","aggregators":["krum"],"attacks":"benign:2"}"#).is_err());
        assert!(simulate_json("not json").is_err());
        assert!(
            schedules_json(r#"{"schedule":{"gamma0":-1,"beta":1,"alpha0":1,"beta_m":1},"iterations":10}"#).is_err()
        );
        assert!(equilibrium_json(r#"{"kappa":[0,0],"iterations":10,"trials":2}"#).is_err());
    }

    #[test]
    fn schedule_curves_decrease() {
        let out = schedules_json(
            r#"{"schedule":{"gamma0":0.1,"beta":0.05,"alpha0":1,"beta_m":0.5,"gamma_exponent":1.0,"alpha_exponent":0.6},"iterations":1000}"#,
        )
        .unwrap();
        let v: Value = serde_json::from_str(&out).unwrap();
        let g: Vec<f64> = serde_json::from_value(v["gamma"].clone()).unwrap();
        assert_eq!(g[0], 0.1);
        assert!(g.windows(2).all(|p| p[1] <= p[0]));
        assert_eq!(v["two_timescale"], true);
    }

    #[test]
    fn equilibrium_heads_towards_kappa() {
        let out = equilibrium_json(r#"{"kappa":[2,-1],"iterations":3000,"trials":4}"#).unwrap();
        let v: EquilibriumValue = serde_json::from_str(&out).unwrap();
        let last = v.q_scaled.last().unwrap();
        assert!((last[0] - 2.0).abs() < 0.2 && (last[1] + 1.0).abs() < 0.1, "{last:?}");
        assert_eq!(v.q_scaled[0], vec![0.0, 0.0]);
    }

    #[derive(Deserialize)]
    struct EquilibriumValue {
        q_scaled: Vec<Vec<f64>>,
    }
}
