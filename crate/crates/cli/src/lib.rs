//! `socialgame` command line: estimation, simulation, prediction,
//! evaluation and energy accounting over vote logs, plus the game server.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

pub mod commands;
pub mod inputs;
pub mod manifest;
pub mod server;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use socialgame::Strata;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "socialgame", version, about = "Lighting social game: learn, simulate, predict, serve")]
pub struct Cli {
    /// Cap on worker threads for bootstrap and prediction.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate each occupant's θ per stratum from a vote log.
    Estimate(EstimateArgs),
    /// Solve for the equilibrium of one round.
    Simulate(SimulateArgs),
    /// Rolling one-day-ahead predictions over a vote log.
    Predict(PredictArgs),
    /// Score predictions against a vote log.
    Evaluate(EvaluateArgs),
    /// Energy saved against the baseline level.
    Savings(SavingsArgs),
    /// Run the game server.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GameArgs {
    /// Points distributed per round.
    #[arg(long, default_value_t = 100.0)]
    pub rho: f64,
    /// Baseline lighting level.
    #[arg(long, default_value_t = 90.0)]
    pub baseline: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Vote log, `timestamp,occupant_id,vote,is_default`.
    #[arg(long)]
    pub votes: PathBuf,
    /// Default periods, `start,end,default_level`. Without it a single
    /// period at --default-level covers the log, or the built-in 2014
    /// schedule applies.
    #[arg(long)]
    pub periods: Option<PathBuf>,
    #[arg(long)]
    pub default_level: Option<f64>,
    /// IANA timezone for naive timestamps and binning.
    #[arg(long, default_value = "America/Los_Angeles")]
    pub timezone: String,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Bootstrap resamples; 0 skips the bootstrap.
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `period-region` or `pooled`.
    #[arg(long, default_value = "period-region")]
    pub strata: Strata,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Players, `occupant,theta,role,vote`; role is active, default or
    /// absent and vote is the starting (or default) vote.
    #[arg(long)]
    pub theta: PathBuf,
    /// Vote for rows that leave it empty.
    #[arg(long, default_value_t = 20.0)]
    pub default_level: f64,
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Sampled days per prediction.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "period-region")]
    pub strata: Strata,
    /// Fixed estimates (`estimates.jsonl` from `estimate`) instead of
    /// refitting θ before every day.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// `predictions.json` from `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SavingsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 90.0)]
    pub baseline: f64,
    /// Installed lighting power at full output, kW.
    #[arg(long)]
    pub power_kw: f64,
    /// Lighting hours per day.
    #[arg(long)]
    pub hours: f64,
    /// Price per kWh.
    #[arg(long, default_value_t = 0.12)]
    pub rate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Service configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Event log; created if missing.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

impl Cli {
    pub fn run(self) -> Result<()> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
        }
        match self.command {
            Command::Estimate(a) => commands::estimate(&a),
            Command::Simulate(a) => commands::simulate(&a),
            Command::Predict(a) => commands::predict(&a),
            Command::Evaluate(a) => commands::evaluate(&a),
            Command::Savings(a) => commands::savings(&a),
            Command::Serve(a) => server::run(&a),
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
