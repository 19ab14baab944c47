//! `mixlogit`: simulate, estimate, compare and report panel mixed logit models.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

/// Exit code for usage and validation failures.
pub const EXIT_USAGE: u8 = 2;
/// Exit code when the optimizer did not converge; the result is still written.
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "mixlogit", version, about = "Panel mixed logit by maximum simulated likelihood")]
pub struct Cli {
    /// Master seed for simulation, draws and Krinsky-Robb sampling.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "MIXLOGIT_THREADS")]
    pub threads: Option<usize>,
    /// Directory for all outputs and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a design and simulate choices from known parameters.
    Simulate(SimulateArgs),
    /// Estimate a model by maximum simulated likelihood.
    Estimate(EstimateArgs),
    /// Compare estimated models: fit metrics and likelihood-ratio tests.
    Compare(CompareArgs),
    /// Value-of-time distributions in travel-cost and housing-cost terms.
    Vot(VotArgs),
    /// Write the draw tensor used for a spec to a binary file.
    DrawsDump(DrawsDumpArgs),
    /// Re-run a manifest and check that the outputs are bitwise identical.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Bundled spec name or TOML path.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 2000)]
    pub respondents: usize,
    #[arg(long, default_value_t = 8)]
    pub tasks: usize,
    /// orthogonal-main-effects or random-balanced.
    #[arg(long, default_value = "orthogonal-main-effects")]
    pub design: String,
    /// JSON map of parameter name to value; defaults to the published estimates.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub spec: String,
    /// Draws per respondent.
    #[arg(long, default_value_t = 1024)]
    pub draws: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_grad: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_rel: f64,
    #[arg(long, default_value_t = 10_000)]
    pub kr_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Start from the estimates in a result JSON (matched by name).
    #[arg(long)]
    pub start: Option<PathBuf>,
    /// Skip the Hessian and standard errors.
    #[arg(long)]
    pub no_covariance: bool,
    /// Output file stem inside the output directory; defaults to the spec name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Result JSON files, simplest model first; the last is the reference
    /// for likelihood-ratio tests.
    pub results: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VotArgs {
    /// Result JSON file.
    #[arg(required_unless_present = "reference")]
    pub result: Option<PathBuf>,
    /// Use the published estimates of a bundled spec instead of a result.
    #[arg(long, conflicts_with = "result")]
    pub reference: Option<String>,
    #[arg(long, default_value_t = mixlogit_core::postfit::DEFAULT_OWNER_INCOME)]
    pub income_owner: f64,
    #[arg(long, default_value_t = mixlogit_core::postfit::DEFAULT_RENTER_INCOME)]
    pub income_renter: f64,
    #[arg(long)]
    pub kr_draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DrawsDumpArgs {
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub respondents: usize,
    #[arg(long, default_value_t = 1024)]
    pub draws: usize,
    #[arg(long, default_value = "draws.bin")]
    pub file: String,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match commands::run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
