use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "homodyne",
    version,
    about = "Stochastic trajectories of a damped two-level atom under \
             time-resolved homodyne detection and coherent feedback"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run one conditioned trajectory and write its time series as CSV
    Trajectory(RunArgs),
    /// Run a trajectory ensemble; write mean/variance series and fitted rates
    Ensemble(RunArgs),
    /// Tabulate diffusion directions and drift vectors on a Bloch-sphere grid
    Fields(RunArgs),
    /// Sweep feedback target angles and report stability exponents
    Stability(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Trajectory(_) => "trajectory",
            Command::Ensemble(_) => "ensemble",
            Command::Fields(_) => "fields",
            Command::Stability(_) => "stability",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Trajectory(a)
            | Command::Ensemble(a)
            | Command::Fields(a)
            | Command::Stability(a) => a,
        }
    }
}

#[derive(Args, Default)]
pub struct RunArgs {
    /// Key=value config file, or a previous run's manifest (.json)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Spontaneous emission rate (1/time)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Measurement window length (time)
    #[arg(long)]
    pub tau: Option<f64>,
    /// Local-oscillator amplitude |alpha| per window
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of measurement windows
    #[arg(long)]
    pub steps: Option<usize>,
    /// Base RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// State representation: statevec | bloch | both
    #[arg(long)]
    pub mode: Option<String>,
    /// Feedback target angle in radians (presence enables feedback)
    #[arg(long)]
    pub theta: Option<f64>,
    /// Feedback delay in windows
    #[arg(long)]
    pub delay: Option<usize>,
    /// Do not subtract the reflected control field from the feedback signal
    #[arg(long)]
    pub no_correction: bool,
    /// Do not apply the constant bias drive at the target state
    #[arg(long)]
    pub no_drive: bool,
    /// Number of trajectories (ensemble)
    #[arg(long)]
    pub traj: Option<u64>,
    /// Worker threads for ensembles (0 = all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (default: $HOMODYNE_OUT_DIR, else the working dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Named preset (ensemble: decay | fig7 | contributions)
    #[arg(long)]
    pub preset: Option<String>,
    /// Grid resolution (fields: sphere grid; stability: theta grid)
    #[arg(long)]
    pub grid: Option<usize>,
}
