//! Experiment runner for `gnep-core`: game files, subcommands and result
//! writers behind the `gnep` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod gamefile;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "gnep",
    version,
    about = "Open-loop equilibria of linear-quadratic dynamic games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the variational equilibrium and certify it.
    Solve(Common),
    /// Turnpike statistics over horizons, initial states and ball radii.
    TurnpikeSweep(Common),
    /// Dissipation inequality, available storage and optimal operation.
    Dissipativity(DissipativityArgs),
    /// Value-function gradient and storage identities.
    Sensitivity(SensitivityArgs),
    /// Solve with a terminal penalty or constraint.
    Penalty(PenaltyArgs),
    /// Learn a linear terminal penalty from midpoint co-states.
    Learn(LearnArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Game file, or `example_eq26` for the bundled example.
    #[arg(value_name = "GAME")]
    pub game_pos: Option<String>,
    /// Game file (alternative to the positional argument).
    #[arg(long = "game", value_name = "PATH", conflicts_with = "game_pos")]
    pub game: Option<String>,
    /// Horizon(s), comma separated.
    #[arg(long = "N", value_name = "INT[,INT...]", value_delimiter = ',')]
    pub horizons: Vec<usize>,
    /// Initial state(s), comma separated; consecutive groups of n_x values
    /// form one state.
    #[arg(
        long = "x0",
        value_name = "FLOAT[,...]",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub x0: Vec<f64>,
    /// Ball radius (or radii) for turnpike measurements.
    #[arg(long = "eps", value_name = "FLOAT[,...]", value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Stopping tolerance on the equilibrium conditions.
    #[arg(long = "kkt-tol", default_value_t = 1e-8)]
    pub kkt_tol: f64,
    /// Output directory for CSV and JSON files.
    #[arg(long = "out", value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DissipativityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Curvatures σ of the quadratic storage terms σ‖x − x_s‖² to try.
    #[arg(
        long = "sigma-grid",
        value_delimiter = ',',
        default_value = "0,0.05,0.1,0.2,0.5,1,2,5"
    )]
    pub sigma_grid: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Relative central-difference step.
    #[arg(long = "fd-step", default_value_t = 1e-5)]
    pub fd_step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    #[command(flatten)]
    pub common: Common,
    /// none, lambda_s, file:<path> or terminal.
    #[arg(long = "penalty", default_value = "lambda_s")]
    pub penalty: String,
}

#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub common: Common,
    /// Maximum number of penalty updates.
    #[arg(long = "imax", default_value_t = 1)]
    pub imax: usize,
    /// Stop once the penalty update is at most this large.
    #[arg(long = "eps-stop", default_value_t = 1e-6)]
    pub eps_stop: f64,
}

/// Runs a parsed command and returns its exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve(c) => commands::solve(&c),
        Command::TurnpikeSweep(c) => commands::turnpike_sweep(&c),
        Command::Dissipativity(a) => commands::dissipativity(&a),
        Command::Sensitivity(a) => commands::sensitivity(&a),
        Command::Penalty(a) => commands::penalty(&a),
        Command::Learn(a) => commands::learn(&a),
    }
}
