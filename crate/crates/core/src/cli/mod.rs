//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 runtime invariant violation.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::distributions::Model;
use crate::error::Error;
use config::{Command, ConfigError, ConfigLayer, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "drmlab",
    version,
    about = "Directed random market wealth-exchange laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Agent-based Monte Carlo run: snapshots, final histogram, manifest.
    Simulate(Flags),
    /// Density iteration of the evolution operator: trace and final histogram.
    Iterate(Flags),
    /// Equilibrium densities of both models as plot-ready CSV.
    Equilibrium(Flags),
    /// Full verification battery; exits 1 if any check fails.
    Verify(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON file with flat keys named like the flags (dashes become underscores).
    #[arg(long)]
    config: Option<PathBuf>,
    /// drm or dy.
    #[arg(long)]
    model: Option<Model>,
    /// Mean wealth.
    #[arg(long)]
    w: Option<f64>,
    /// Number of agents (even).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Upper edge of the resolved grid (default 40 w).
    #[arg(long = "x-max")]
    x_max: Option<f64>,
    /// Number of grid cells.
    #[arg(long)]
    cells: Option<usize>,
    /// Exponent of the Laplace metric.
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report discretization-limited checks instead of enforcing them.
    #[arg(long)]
    calibrate: bool,
    /// Repeat a simulation over consecutive seeds.
    #[arg(long)]
    repeat: Option<u32>,
    /// Starting law: equal, uniform, exponential or equilibrium.
    #[arg(long)]
    init: Option<String>,
    #[arg(long = "snapshot-every")]
    snapshot_every: Option<u64>,
    #[arg(long = "s-min")]
    s_min: Option<f64>,
    #[arg(long = "s-max")]
    s_max: Option<f64>,
    #[arg(long = "s-points")]
    s_points: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long = "x-lo")]
    x_lo: Option<f64>,
    #[arg(long = "x-hi")]
    x_hi: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Random measure pairs in the contraction check.
    #[arg(long)]
    pairs: Option<usize>,
    /// Random measures in the conservation and moment checks.
    #[arg(long)]
    measures: Option<usize>,
    /// Run every loop on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Flags {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            model: self.model,
            w: self.w,
            n: self.n,
            steps: self.steps,
            snapshot_every: self.snapshot_every,
            seed: self.seed,
            x_max: self.x_max,
            cells: self.cells,
            alpha: self.alpha,
            s_min: self.s_min,
            s_max: self.s_max,
            s_points: self.s_points,
            tolerance: self.tolerance,
            init: self.init.clone(),
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            points: self.points,
            pairs: self.pairs,
            measures: self.measures,
            calibrate: self.calibrate.then_some(true),
            repeat: self.repeat,
            sequential: self.sequential.then_some(true),
            out: self.out.clone(),
        }
    }
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Verification(Vec<String>),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Verification(names) => write!(f, "verification failed: {}", names.join(", ")),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(_) | Error::NegativeMass { .. } => Failure::Runtime(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn dispatch(command: Command, flags: &Flags) -> Result<(), Failure> {
    let file = match &flags.config {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };
    let cfg = ExperimentConfig::resolve(command, &file.overlay(&flags.layer()))?;
    log::debug!("effective config: {cfg:?}");
    match command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Iterate => commands::iterate(&cfg),
        Command::Equilibrium => commands::equilibrium(&cfg),
        Command::Verify => commands::verify(&cfg),
    }
}

/// Parses the process arguments, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Iterate(f) => (Command::Iterate, f),
        Sub::Equilibrium(f) => (Command::Equilibrium, f),
        Sub::Verify(f) => (Command::Verify, f),
    };
    match dispatch(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drmlab {command}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
