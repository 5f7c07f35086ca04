//! Command-line driver: sweeps from a JSON [`RunConfig`], CSV output and the
//! theory-versus-simulation gate.
//!
//! Exit codes: `0` success, `1` numerical failure, `2` configuration or usage
//! error, `3` agreement gate failed, `4` data or i/o error.

mod config;
mod output;
mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussmoments::{kappa_constants, Activation};
use crate::linalg::set_blas_threads;
use crate::realdata::Dataset;

pub use config::{AxisSpec, GridSpec, Logspace, ModelSpec, RealDataConfig, RunConfig, SimulationConfig};
pub use output::{float, write_json, write_realdata, write_results, MC_COLUMNS, REALDATA_COLUMNS, THEORY_COLUMNS};
pub use sweep::{
    problem, run_agreement, run_curve, run_phase_space, run_realdata_sweep, AgreementPoint, AgreementReport, CurveAxis,
    McColumns, RealDataRow, ResultRow, AGREEMENT_GATE,
};

#[derive(Debug, Parser)]
#[command(name = "anisorf", version, about = "Random-feature learning curves on block-anisotropic data")]
pub struct Cli {
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, env = "ANISORF_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_path`; CSV goes to stdout when neither is set.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Overrides the number of seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Drops the simulation block.
    #[arg(long)]
    pub theory_only: bool,
    /// Also writes a JSON mirror next to the CSV (or JSON alone on stdout).
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learning curve along one ratio.
    Curve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "params")]
        axis: CurveAxis,
    },
    /// Error over the (N/D, P/D) grid.
    Phase {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Theory against Monte Carlo; fails when some |z| exceeds 3.
    Agree {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Random-feature students on MNIST or CIFAR-10.
    Realdata {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        dataset: Option<Dataset>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Prints κ₀, κ₁ and κ★ for an activation.
    Kappa {
        #[arg(long)]
        activation: Activation,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long)]
        json: bool,
    },
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    GateFailed,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parameter(_) => 2,
        Error::Data(_) | Error::Parse(_) | Error::Io { .. } => 4,
        _ => 1,
    }
}

fn load(run: &RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&run.config)?;
    if let Some(out) = &run.output {
        config.output_path = Some(out.clone());
    }
    if run.theory_only {
        config.simulation = None;
    }
    if let Some(seeds) = run.seeds {
        if let Some(sim) = config.simulation.as_mut() {
            sim.seeds = seeds;
        }
        if let Some(real) = config.realdata.as_mut() {
            real.seeds = seeds;
        }
    }
    config.validate()?;
    Ok(config)
}

fn emit<T: Serialize + ?Sized>(
    path: Option<&Path>,
    json: bool,
    value: &T,
    csv: impl Fn(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            csv(&mut output::create(p)?)?;
            if json {
                write_json(output::create(&p.with_extension("json"))?, value)?;
            }
        }
        None if json => write_json(std::io::stdout().lock(), value)?,
        None => csv(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    // Parallelism comes from the worker pool; keeping BLAS serial makes
    // results independent of the thread count.
    set_blas_threads(1);
    match cli.command {
        Command::Curve { run, axis } => {
            let config = load(&run)?;
            let rows = run_curve(&config, axis)?;
            emit(config.output_path.as_deref(), run.json, &rows, |w| write_results(w, &rows))?;
        }
        Command::Phase { run } => {
            let config = load(&run)?;
            let rows = run_phase_space(&config)?;
            emit(config.output_path.as_deref(), run.json, &rows, |w| write_results(w, &rows))?;
        }
        Command::Agree { run } => {
            let config = load(&run)?;
            let (rows, report) = run_agreement(&config)?;
            emit(config.output_path.as_deref(), run.json, &rows, |w| write_results(w, &rows))?;
            eprintln!(
                "agreement: max |z| = {:.3} over {} points (gate {AGREEMENT_GATE})",
                report.max_abs_z,
                report.points.len()
            );
            if !report.passes() {
                return Ok(Status::GateFailed);
            }
        }
        Command::Realdata { run, alpha, dataset, data_dir } => {
            let mut config = load(&run)?;
            let real = config.realdata.get_or_insert_with(|| RealDataConfig {
                dataset: dataset.unwrap_or(Dataset::Mnist),
                data_dir: None,
                alpha: 0.0,
                keep: 100,
                downscale: None,
                corruption: 0.0,
                seeds: run.seeds.unwrap_or(5),
                base_seed: 0,
                n_test: None,
                fit_tol: 1e-10,
            });
            if let Some(a) = alpha {
                real.alpha = a;
            }
            if let Some(d) = dataset {
                real.dataset = d;
            }
            if let Some(dir) = data_dir {
                real.data_dir = Some(dir);
            }
            config.validate()?;
            let rows = run_realdata_sweep(&config)?;
            emit(config.output_path.as_deref(), run.json, &rows, |w| write_realdata(w, &rows))?;
        }
        Command::Kappa { activation, r, json } => {
            let k = kappa_constants(activation, r)?;
            if json {
                let text = serde_json::to_string(&k).map_err(|e| Error::Numerical(e.to_string()))?;
                println!("{text}");
            } else {
                println!("kappa0,kappa1,kappa_star,r");
                println!("{},{},{},{}", float(k.kappa0), float(k.kappa1), float(k.kappa_star), float(k.r));
            }
        }
    }
    Ok(Status::Success)
}

/// Entry point of the `anisorf` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::GateFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
