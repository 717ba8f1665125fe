//! The synchronous training loop.

use log::{debug, warn};

use super::config::{Mode, RunConfig};
use super::metrics::MetricsRecord;
use crate::adversary::{attack_round, WorkerState};
use crate::aggregate::{Aggregator, AggregatorKind, AuxOracle};
use crate::data::{gaussian_vec, generate, partition, DataSplit, Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::objective::{Objective, QuadraticSummary};
use crate::rng::{RngStream, AUX_STREAM, DATA_STREAM, INIT_STREAM, PARTITION_STREAM};
use crate::schedule::{alpha_at, gamma_at};
use crate::vector::{distance, dot, norm, ParamVector};

/// Everything derived from a config before the first iteration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub split: DataSplit,
    /// Sorted union of the worker shards.
    pub training_rows: Vec<usize>,
    pub objective: Objective,
    /// Unregularized copy for reporting losses.
    pub eval_objective: Objective,
    /// Exact full-training-set gradient oracle (regression only).
    pub summary: Option<QuadraticSummary>,
    pub theta_star: Option<ParamVector>,
    /// Minimizer of the training objective (regression only).
    pub w_star: Option<ParamVector>,
    pub w0: ParamVector,
}

impl Setup {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let (dataset, theta_star) = generate(&config.task, &mut RngStream::new(seed, DATA_STREAM))?;
        let split = partition(
            dataset.len(),
            config.m,
            config.task.n_aux,
            config.task.n_test,
            &mut RngStream::new(seed, PARTITION_STREAM),
        )?;
        let training_rows = split.training_rows();
        let objective = Objective::for_dataset(&dataset, config.l2())?;
        let eval_objective = Objective::for_dataset(&dataset, 0.0)?;
        let (summary, w_star) = if dataset.kind() == TaskKind::Regression {
            let s = QuadraticSummary::new(&objective, &dataset, &training_rows)?;
            let w = s.minimizer().ok();
            (Some(s), w)
        } else {
            (None, None)
        };
        let w0 = ParamVector::new(gaussian_vec(
            objective.param_dim(),
            config.init_std,
            &mut RngStream::new(seed, INIT_STREAM),
        ))?;
        Ok(Self {
            config: config.clone(),
            dataset,
            split,
            training_rows,
            objective,
            eval_objective,
            summary,
            theta_star,
            w_star,
            w0,
        })
    }

    /// Rows worker `j` samples from: its shard, or the whole training set in
    /// theorem-check mode.
    pub fn worker_rows(&self, j: usize) -> &[usize] {
        match self.config.mode {
            Mode::Empirical => &self.split.worker_shards[j],
            Mode::TheoremCheck => &self.training_rows,
        }
    }

    /// Rows the server's auxiliary batches come from.
    pub fn aux_rows(&self) -> &[usize] {
        match self.config.mode {
            Mode::Empirical => &self.split.auxiliary,
            Mode::TheoremCheck => &self.training_rows,
        }
    }

    /// Fresh worker states whose streams come from `stream(j)`.
    pub fn workers_with(&self, mut stream: impl FnMut(usize) -> RngStream) -> Result<Vec<WorkerState>> {
        self.config
            .attacks
            .iter()
            .enumerate()
            .map(|(j, a)| WorkerState::new(j, self.worker_rows(j).to_vec(), a.clone(), stream(j)))
            .collect()
    }

    pub fn workers(&self) -> Result<Vec<WorkerState>> {
        let seed = self.config.seed;
        self.workers_with(|j| RngStream::worker(seed, j))
    }

    pub fn aux_oracle(&self, rng: RngStream) -> Result<AuxOracle<'_>> {
        AuxOracle::new(
            &self.objective,
            &self.dataset,
            self.aux_rows(),
            self.config.aux_batch_size,
            rng,
        )
    }

    /// Full-training-set gradient of the (regularized) objective.
    pub fn full_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        match &self.summary {
            Some(s) => s.gradient(w),
            None => self
                .objective
                .population_gradient(w, &self.dataset, &self.training_rows),
        }
    }

    pub fn aggregator(&self) -> Result<Aggregator> {
        Aggregator::new(
            self.config.aggregator.clone(),
            self.config.schedule,
            self.config.m,
            self.config.mode == Mode::Empirical,
        )
    }

    fn epoch(&self, t: usize) -> f64 {
        let pool = match self.config.mode {
            Mode::Empirical => self.training_rows.len() as f64 / self.config.m as f64,
            Mode::TheoremCheck => self.training_rows.len() as f64,
        };
        t as f64 * self.config.batch_size as f64 / pool
    }

    fn record(&self, t: usize, w: &[f64], q: &[f64], corrupted: usize) -> Result<MetricsRecord> {
        let obj = &self.eval_objective;
        let test = &self.split.test;
        let test_accuracy = match self.dataset.kind() {
            TaskKind::Classification => Some(obj.accuracy(w, &self.dataset, test)?),
            TaskKind::Regression => None,
        };
        let sched = &self.config.schedule;
        Ok(MetricsRecord {
            t,
            epoch: self.epoch(t),
            train_loss: obj.loss(w, &self.dataset, &self.training_rows)?,
            test_loss: obj.loss(w, &self.dataset, test)?,
            test_accuracy,
            dist_to_opt: self.w_star.as_ref().map(|ws| distance(w, ws.as_slice())),
            gamma: gamma_at(sched, t as u64),
            alpha: alpha_at(sched, t as u64),
            byz_stat: None,
            corrupted_rows: corrupted,
            q: q.to_vec(),
        })
    }
}

/// A `(t, w_t, q_t)` snapshot taken before the step at iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    pub w: Vec<f64>,
    pub q: Vec<f64>,
}

/// Per-iteration quantities kept in theorem-check mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// `s_t = <grad F(w_t), d_t>` where the step was `w_{t+1} = w_t - gamma_t d_t`.
    pub byz_stat: Vec<f64>,
    /// `||w_t - w*||` for `t = 0..=T`.
    pub distances: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    /// Seconds since the start of the run, one per record. Kept apart from
    /// the records so metrics files stay reproducible.
    pub wall_time: Vec<f64>,
    pub final_w: ParamVector,
    pub final_q: Vec<f64>,
    pub trace: Option<Trace>,
    pub w_star: Option<ParamVector>,
    pub w0: ParamVector,
}

impl RunOutput {
    pub fn last(&self) -> &MetricsRecord {
        self.records.last().expect("a run records at least two rows")
    }
}

const CHECKPOINTS: usize = 10;

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let setup = Setup::new(config)?;
    run_setup(&setup)
}

pub fn run_setup(setup: &Setup) -> Result<RunOutput> {
    let cfg = &setup.config;
    let clock = Clock::start();
    let theorem = cfg.mode == Mode::TheoremCheck;
    let mut workers = setup.workers()?;
    let mut aux = setup.aux_oracle(RngStream::new(cfg.seed, AUX_STREAM))?;
    let mut agg = setup.aggregator()?;
    let mask = cfg.benign_mask();
    let benign = (cfg.aggregator.kind == AggregatorKind::BaselineOracle).then_some(mask.as_slice());
    let mut w = setup.w0.clone();
    let t_max = cfg.iterations;

    let mut records = Vec::with_capacity(t_max / cfg.eval_every + 2);
    let mut wall_time = Vec::with_capacity(records.capacity());
    let mut trace = theorem.then(|| Trace {
        byz_stat: Vec::with_capacity(t_max),
        distances: Vec::with_capacity(t_max + 1),
        checkpoints: Vec::with_capacity(CHECKPOINTS),
    });
    let checkpoint_every = (t_max / CHECKPOINTS).max(1);
    let mut warned_ball = false;
    let mut last_corrupted = 0;

    for t in 0..t_max {
        let step = |e: Error| Error::at(t, e);
        let h = attack_round(
            &mut workers,
            &setup.objective,
            &setup.dataset,
            w.as_slice(),
            cfg.batch_size,
        )
        .map_err(step)?;
        let grad_f = if theorem {
            Some(setup.full_gradient(w.as_slice()).map_err(step)?)
        } else {
            None
        };
        if let Some(tr) = trace.as_mut() {
            if let Some(ws) = &setup.w_star {
                tr.distances.push(distance(w.as_slice(), ws.as_slice()));
            }
            if t % checkpoint_every == 0 && tr.checkpoints.len() < CHECKPOINTS {
                tr.checkpoints.push(Checkpoint {
                    t,
                    w: w.as_slice().to_vec(),
                    q: agg.q().to_vec(),
                });
            }
        }
        let recording = t % cfg.eval_every == 0;
        if recording {
            records.push(setup.record(t, w.as_slice(), agg.q(), last_corrupted).map_err(step)?);
            wall_time.push(clock.elapsed());
        }

        let info = agg.step(&mut w, h, &mut aux, benign).map_err(step)?;
        last_corrupted = info.corrupted_rows.len();

        if let (Some(tr), Some(g)) = (trace.as_mut(), grad_f) {
            let s = dot(&g, &info.direction);
            tr.byz_stat.push(s);
            if recording {
                records.last_mut().expect("pushed above").byz_stat = Some(s);
            }
        }
        if let Some(r) = cfg.ball_radius {
            if !warned_ball && norm(w.as_slice()) > r {
                warn!("iterate left the ball of radius {r} at t = {}", t + 1);
                warned_ball = true;
            }
        }
    }

    if let (Some(tr), Some(ws)) = (trace.as_mut(), &setup.w_star) {
        tr.distances.push(distance(w.as_slice(), ws.as_slice()));
    }
    records.push(
        setup
            .record(t_max, w.as_slice(), agg.q(), last_corrupted)
            .map_err(|e| Error::at(t_max, e))?,
    );
    wall_time.push(clock.elapsed());
    debug!(
        "run finished: seed {} aggregator {} final test loss {}",
        cfg.seed,
        cfg.aggregator.kind,
        records.last().map_or(f64::NAN, |r| r.test_loss)
    );

    Ok(RunOutput {
        records,
        wall_time,
        final_q: agg.q().to_vec(),
        final_w: w,
        trace,
        w_star: setup.w_star.clone(),
        w0: setup.w0.clone(),
    })
}

#[cfg(not(target_arch = "wasm32"))]
struct Clock(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Clock {
    fn start() -> Self {
        Clock(std::time::Instant::now())
    }

    fn elapsed(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

// No monotonic clock on wasm32-unknown-unknown without JS bindings.
#[cfg(target_arch = "wasm32")]
struct Clock;

#[cfg(target_arch = "wasm32")]
impl Clock {
    fn start() -> Self {
        Clock
    }

    fn elapsed(&self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::AttackSpec;
    use crate::harness::config::RunConfig;

    fn small(kind: AggregatorKind, attacks: Vec<AttackSpec>, t: usize) -> RunConfig {
        let mut c = RunConfig::preset(TaskKind::Regression, kind, attacks).with_iterations(t);
        c.task.n = 2000;
        c.task.n_test = 200;
        c.task.n_aux = 100;
        c
    }

    #[test]
    fn first_bygars_pp_step_keeps_w() {
        let cfg = small(AggregatorKind::BygarsPp, vec![AttackSpec::Benign; 8], 1);
        let out = run(&cfg).unwrap();
        assert_eq!(out.final_w, out.w0);
        assert_eq!(out.records.len(), 2);
    }

    #[test]
    fn record_count_is_ceil_plus_one() {
        for (t, e) in [(10, 10), (11, 10), (9, 10), (1, 1), (25, 4)] {
            let mut cfg = small(AggregatorKind::Average, vec![AttackSpec::Benign; 2], t);
            cfg.eval_every = e;
            let out = run(&cfg).unwrap();
            assert_eq!(out.records.len(), t.div_ceil(e) + 1, "T={t} e={e}");
            assert_eq!(out.records.last().unwrap().t, t);
            assert_eq!(out.wall_time.len(), out.records.len());
        }
    }

    #[test]
    fn average_reduces_test_loss() {
        let cfg = small(AggregatorKind::Average, vec![AttackSpec::Benign; 8], 500);
        let out = run(&cfg).unwrap();
        assert!(out.last().test_loss < 0.1 * out.records[0].test_loss);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let cfg = small(
            AggregatorKind::Bygars,
            crate::adversary::mixed_attack_default(8).unwrap(),
            60,
        )
        .with_attacks(vec![
            AttackSpec::Benign,
            AttackSpec::gaussian(),
            AttackSpec::sign_flip(),
            AttackSpec::lie(1.5),
            AttackSpec::ofom(),
            AttackSpec::paf(),
            AttackSpec::constant(),
            AttackSpec::random_sign_flip(),
        ]);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_w, b.final_w);
    }

    #[test]
    fn theorem_mode_traces_every_iteration() {
        let mut cfg = RunConfig::theorem_preset(vec![AttackSpec::Benign; 3]).with_iterations(40);
        cfg.task.n = 1000;
        cfg.task.n_test = 100;
        cfg.task.n_aux = 50;
        let out = run(&cfg).unwrap();
        let tr = out.trace.unwrap();
        assert_eq!(tr.byz_stat.len(), 40);
        assert_eq!(tr.byz_stat[0], 0.0);
        assert_eq!(tr.distances.len(), 41);
        assert_eq!(tr.checkpoints.len(), 10);
        assert!(out.records.iter().all(|r| r.dist_to_opt.is_some()));
    }

    #[test]
    fn setup_errors_carry_iteration() {
        let cfg = small(AggregatorKind::Bygars, vec![AttackSpec::Benign; 2], 3);
        let setup = Setup::new(&cfg).unwrap();
        assert_eq!(
            setup.worker_rows(0).len() + setup.worker_rows(1).len(),
            setup.training_rows.len()
        );
        let err = Error::at(2, Error::NonFinite("x"));
        assert_eq!(err.cause(), "non_finite");
    }
}
