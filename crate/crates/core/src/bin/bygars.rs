//! Command-line driver: `run`, `sweep`, `verify`, plus `preset` and
//! `export-data` helpers.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error, 3 verification
//! failure.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bygars::data::{generate, write_dataset};
use bygars::harness::sweep::{mean_final_test_loss, write_table};
use bygars::harness::{
    parse_attack_set, run, sweep, verify_cmd, write_metrics, write_reports, write_timing, RunConfig, SweepAxis,
    VerifyOptions,
};
use bygars::rng::{RngStream, DATA_STREAM};
use bygars::verify::CheckName;
use bygars::{AggregatorKind, Error, TaskKind};

#[derive(Parser)]
#[command(name = "bygars", version, about = "Byzantine-resilient SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once and write metrics.csv and timing.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the cross product of axis values and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// n_aux, k_meta, attacks, aggregator, batch_size or lie_z.
        #[arg(long)]
        axis: String,
        /// Values for the axis. Separate with ';' when a value has commas.
        #[arg(long, required = true, num_args = 1.., value_delimiter = ';')]
        values: Vec<String>,
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run theory checks on a theorem-check config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// byz_tolerance, q_recursion, equilibrium, martingale, convergence.
        #[arg(long, num_args = 0.., value_delimiter = ',')]
        checks: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo rounds per tested point.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value = "report.jsonl")]
        out: PathBuf,
    },
    /// Print a tuned config to stdout.
    Preset {
        #[arg(long, value_enum, default_value_t = Task::Regression)]
        task: Task,
        #[arg(long, default_value = "bygars_pp")]
        aggregator: String,
        /// `mixed`, or counts such as `benign:2+sign_flip:6`.
        #[arg(long, default_value = "benign:8")]
        attacks: String,
        /// Theorem-check settings (regression, bygars_pp, raw gradients).
        #[arg(long)]
        theorem: bool,
    },
    /// Write the generated dataset as CSV.
    ExportData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Regression,
    Classification,
}

enum Failure {
    Error(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error [{}]: {e}", e.cause());
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, Error> {
    let cfg = RunConfig::load(path)?;
    let cfg = match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let output = run(&cfg)?;
            fs::create_dir_all(&out)?;
            write_metrics(&output.records, create(&out.join("metrics.csv"))?)?;
            write_timing(&output.records, &output.wall_time, create(&out.join("timing.csv"))?)?;
            let last = output.last();
            print!("t={} test_loss={:.6}", last.t, last.test_loss);
            if let Some(acc) = last.test_accuracy {
                print!(" test_accuracy={acc:.4}");
            }
            if let Some(d) = last.dist_to_opt {
                print!(" dist_to_opt={d:.6}");
            }
            println!();
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            out,
        } => {
            let cfg = load(&config, None)?;
            let axis = SweepAxis::from_name(&axis)?;
            let runs = sweep(&cfg, axis, &values, &seeds)?;
            fs::create_dir_all(&out)?;
            write_table(axis, &runs, create(&out.join("sweep.csv"))?)?;
            for r in &runs {
                let dir = out.join(format!("{}={}/seed={}", axis.name(), sanitize(&r.value), r.seed));
                fs::create_dir_all(&dir)?;
                write_metrics(&r.output.records, create(&dir.join("metrics.csv"))?)?;
            }
            for (value, loss) in mean_final_test_loss(&runs) {
                println!("{}={value}  mean final test loss {loss:.6}", axis.name());
            }
        }
        Command::Verify {
            config,
            checks,
            seed,
            trials,
            out,
        } => {
            let cfg = load(&config, seed)?;
            let checks = checks
                .iter()
                .map(|c| c.trim())
                .filter(|c| !c.is_empty())
                .map(CheckName::from_name)
                .collect::<Result<Vec<_>, _>>()?;
            let opts = VerifyOptions {
                n_trials: trials,
                ..VerifyOptions::default()
            };
            let reports = verify_cmd(&cfg, &checks, &opts)?;
            let mut file = create(&out)?;
            write_reports(&reports, &mut file)?;
            file.flush()?;
            for r in &reports {
                println!("{}", r.summary());
                for note in &r.notes {
                    println!("    {note}");
                }
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Failure::Checks(failed));
            }
        }
        Command::Preset {
            task,
            aggregator,
            attacks,
            theorem,
        } => {
            let attacks = parse_attack_set(&attacks)?;
            let cfg = if theorem {
                RunConfig::theorem_preset(attacks)
            } else {
                let task = match task {
                    Task::Regression => TaskKind::Regression,
                    Task::Classification => TaskKind::Classification,
                };
                RunConfig::preset(task, AggregatorKind::from_name(&aggregator)?, attacks)
            };
            cfg.validate()?;
            print!("{}", cfg.to_toml()?);
        }
        Command::ExportData { config, out } => {
            let cfg = load(&config, None)?;
            let (ds, _) = generate(&cfg.task, &mut RngStream::new(cfg.seed, DATA_STREAM))?;
            let mut file = create(&out)?;
            write_dataset(&ds, &mut file)?;
            file.flush()?;
        }
    }
    Ok(())
}

/// Keep sweep values usable as directory names.
fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-+:".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}
