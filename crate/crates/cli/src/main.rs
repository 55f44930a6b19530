//! `privexp`: simulate data, release noisy statistics, and run private
//! posterior inference and calibration experiments from the shell.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privexp::Error;

#[derive(Debug, Parser)]
#[command(name = "privexp", version, about = "Private Bayesian inference from noisy sufficient statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a data set from a family at a fixed parameter.
    Simulate(SimulateArgs),
    /// Release Laplace-noised sufficient statistics of a data set.
    Release(ReleaseArgs),
    /// Sample the private posterior given a release and a prior.
    Infer(InferArgs),
    /// Run a calibration experiment.
    Calibrate(ExperimentArgs),
    /// Run a utility (MMD) experiment.
    Utility(ExperimentArgs),
    /// Record full chains, burn-in included, on repeated simulated data.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON with family, theta_true, and n.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output data file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReleaseArgs {
    /// Data file written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Truncation bounds; required for families with unbounded statistics.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    bounds: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    release: PathBuf,
    /// JSON with family and prior.
    #[arg(long)]
    prior: PathBuf,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value_t = 2000)]
    burnin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit burn-in iterations too.
    #[arg(long)]
    trace: bool,
    /// Coupling of the center statistic in the truncated sampler.
    #[arg(long, value_parser = ["independent", "joint"])]
    scheme: Option<String>,
    /// Chain output (NDJSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// Worker threads for the trial pool (`calibrate` only; 1 runs sequentially).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidHyperParams(_) | Error::InvalidArgument(_) | Error::Domain(_) => 2,
        Error::MustTruncate(_)
        | Error::DegenerateInterval { .. }
        | Error::Unsupported { .. }
        | Error::SupportViolation(_)
        | Error::InvalidStats(_) => 3,
        Error::FamilyMismatch { .. } => 4,
        Error::Io { .. } | Error::Singular(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a.config, a.seed, &a.out),
        Command::Release(a) => commands::release(&a.data, a.epsilon, a.bounds.as_deref(), a.seed, &a.out),
        Command::Infer(a) => commands::infer(&commands::InferOptions {
            release: a.release,
            prior: a.prior,
            iters: a.iters,
            burnin: a.burnin,
            seed: a.seed,
            trace: a.trace,
            scheme: a.scheme,
            out: a.out,
        }),
        Command::Calibrate(a) => commands::calibrate(&a.config, a.seed, a.iters, a.burnin, a.jobs, &a.out),
        Command::Utility(a) => {
            if a.jobs.is_some() {
                log::warn!("--jobs only applies to calibrate; running sequentially");
            }
            commands::utility(&a.config, a.seed, a.iters, a.burnin, &a.out)
        }
        Command::Trace(a) => commands::trace(&a.config, a.seed, a.iters, &a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::MustTruncate(_) = e {
                eprintln!("hint: pass --bounds A B");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
