//! `pwl`: simulate piecewise-linear systems, identify them from sampled data,
//! realize them from Hankel matrices and compare the results.

mod error;
mod eval;
mod files;
mod identify;
mod realize;
mod reproduce;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, EXIT_CONFIG};

#[derive(Parser, Debug)]
#[command(name = "pwl", version, about = "Simulation, identification and realization of piecewise-linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample trajectories to CSV (with a `.sidecar.json` of switch times).
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Fit K affine modes to trajectory data.
    Identify(IdentifyArgs),
    /// Realize a system from a Hankel matrix or from a model's Markov parameters.
    Realize(RealizeArgs),
    /// Compare identified and reference results.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run a benchmark experiment end to end and report the outcome.
    Reproduce(ReproduceArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Random 5-mode planar Voronoi system, 6 runs of 300 samples at 0.02.
    #[value(alias = "paper-artificial")]
    Artificial,
    /// Lorenz system, 5000 samples at 0.01.
    #[value(alias = "paper-lorenz")]
    Lorenz,
}

#[derive(Args, Debug, Clone)]
pub struct SimCommon {
    /// Sampling step.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Length of each run.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Relative noise level in percent added to states and derivatives.
    #[arg(long, default_value_t = 0.0)]
    pub noise_snr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum SimulateCommand {
    /// Exact sampling of a PWL model under a Voronoi or scheduled switching law.
    Pwl(SimulatePwlArgs),
    /// Runge-Kutta sampling of the Lorenz system.
    Lorenz(SimulateLorenzArgs),
}

#[derive(Args, Debug)]
pub struct SimulatePwlArgs {
    /// PWL model JSON.
    #[arg(long, required_unless_present = "preset")]
    pub model: Option<PathBuf>,
    /// JSON array of Voronoi centers, one per mode.
    #[arg(long, conflicts_with = "schedule")]
    pub voronoi: Option<PathBuf>,
    /// JSON array of {time, mode, entry_state} switches.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Number of runs from random initial states, concatenated.
    #[arg(long)]
    pub concat: Option<usize>,
    /// Initial state, comma separated (single run only).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Initial mode under a schedule.
    #[arg(long, default_value_t = 0)]
    pub q0: usize,
    /// Minimum time between Voronoi switches (default 5 steps).
    #[arg(long)]
    pub min_dwell: Option<f64>,
    /// Generate the benchmark system instead of reading one; the model and
    /// centers are written next to the CSV.
    #[arg(long, value_enum, conflicts_with_all = ["model", "voronoi", "schedule", "x0"])]
    pub preset: Option<Preset>,
    #[command(flatten)]
    pub common: SimCommon,
}

#[derive(Args, Debug)]
pub struct SimulateLorenzArgs {
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 28.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 8.0 / 3.0)]
    pub beta: f64,
    /// Initial state, comma separated (random near the attractor by default).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Only `lorenz` applies: 5000 samples at 0.01.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[command(flatten)]
    pub common: SimCommon,
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    /// Trajectory CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of modes.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Termination threshold on E (default 1e-9 times the mean squared derivative).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Stall threshold on relative change of E.
    #[arg(long)]
    pub delta_rel: Option<f64>,
    /// Maximum iterations per restart.
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Estimate derivatives by central differences when the CSV has none.
    #[arg(long)]
    pub fd: bool,
    /// JSON file with any of k, epsilon, delta_rel, t_max, restarts, seed; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Result JSON (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of `t,mode` per data point.
    #[arg(long)]
    pub assignments: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RealizeArgs {
    /// Hankel matrix JSON.
    #[arg(long, conflicts_with_all = ["model", "l", "m", "r"], required_unless_present = "model")]
    pub hankel: Option<PathBuf>,
    /// Model JSON whose initial states define the analytic pieces.
    #[arg(long, requires = "from_model")]
    pub model: Option<PathBuf>,
    /// Compute the Markov parameters from `--model`.
    #[arg(long)]
    pub from_model: bool,
    /// Row depth (default: total state dimension).
    #[arg(long)]
    pub l: Option<usize>,
    /// Column depth (default: total state dimension).
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of pieces (default: all).
    #[arg(long)]
    pub r: Option<usize>,
    /// Relative singular-value threshold for rank decisions.
    #[arg(long)]
    pub rank_tol: Option<f64>,
    /// Realize a PWL with at most K modes of dimension at most N.
    #[arg(long, num_args = 2, value_names = ["K", "N"])]
    pub kn: Option<Vec<usize>>,
    /// Exhaustive partition search instead of greedy.
    #[arg(long, requires = "kn")]
    pub exhaustive: bool,
    /// For affine models, apply N to the embedded (linear) mode dimension
    /// instead of the affine one.
    #[arg(long, requires = "kn")]
    pub n_bound_after_embedding: bool,
    /// Output JSON (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Match estimated modes to true modes; writes a match report.
    Match {
        #[arg(long = "true")]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement of the `mode` columns of two CSV files.
    Segment {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residual of an AR relation on a sampled signal (finite differences).
    Ar {
        #[arg(long)]
        traj: PathBuf,
        /// SARS model JSON.
        #[arg(long)]
        coeffs: PathBuf,
        /// Mode of the SARS model whose coefficients are checked.
        #[arg(long, default_value_t = 0)]
        mode: usize,
        /// Closed time interval to check, which must not contain a switch.
        #[arg(long, num_args = 2, value_names = ["T0", "T1"], allow_hyphen_values = true)]
        segment: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Number of seeded trials (artificial preset).
    #[arg(long, default_value_t = 10)]
    pub trials: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Noise level in percent (artificial preset).
    #[arg(long, default_value_t = 0.0)]
    pub noise_snr: f64,
    /// Report JSON (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(SimulateCommand::Pwl(args)) => simulate::pwl(&args),
        Command::Simulate(SimulateCommand::Lorenz(args)) => simulate::lorenz(&args),
        Command::Identify(args) => identify::run(&args),
        Command::Realize(args) => realize::run(&args),
        Command::Eval(cmd) => eval::run(&cmd),
        Command::Reproduce(args) => reproduce::run(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{}", err.json_line());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.code as u8)
        }
    }
}
