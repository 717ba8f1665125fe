//! Byzantine-resilient distributed SGD with reputation-score aggregation.
//!
//! The crate simulates one server and `m` workers on synthetic regression
//! and classification tasks. Workers may be honest or run one of several
//! attacks; the server combines their gradients with ByGARS, ByGARS++ or a
//! baseline rule. [`verify`] holds Monte Carlo checks of the method's
//! theoretical properties and [`harness`] drives runs, sweeps and metrics.

pub mod adversary;
pub mod aggregate;
pub mod data;
pub mod error;
pub mod harness;
pub mod objective;
pub mod rng;
pub mod schedule;
pub mod vector;
pub mod verify;

pub use adversary::{attack_round, mixed_attack_default, AttackSpec, WorkerState};
pub use aggregate::{Aggregator, AggregatorConfig, AggregatorKind, AuxOracle, NormPolicy};
pub use data::{Dataset, SyntheticSpec, TaskKind};
pub use error::{Error, Result};
pub use objective::Objective;
pub use rng::RngStream;
pub use schedule::ScheduleSpec;
pub use vector::{GradientBatch, ParamVector};
