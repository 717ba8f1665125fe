//! Experiment driver: configs, runs, sweeps and metrics files.

pub mod checks;
pub mod config;
pub mod metrics;
pub mod run;
pub mod sweep;

pub use checks::{verify_cmd, write_reports, VerifyOptions};
pub use config::{parse_attack_set, Mode, RunConfig};
pub use metrics::{write_metrics, write_timing, MetricsRecord};
pub use run::{run, run_setup, Checkpoint, RunOutput, Setup, Trace};
pub use sweep::{sweep, SweepAxis, SweepRun};
