//! Command-line driver: training, evaluation, offline monitoring, ablation
//! sweeps and backup comparisons. Every command writes its artifacts under
//! `--out` and prints their paths.

pub mod commands;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stlnpc", version, about = "Neural predictive control under STL specifications")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the run configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel rollouts.
    #[arg(long, global = true, env = "STLNPC_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; writes policy.json, metrics.csv and loss.svg.
    Train(TrainArgs),
    /// Closed-loop evaluation of a policy or a planner.
    Eval(EvalArgs),
    /// Per-step robustness and verdict of a formula on a trace file.
    Monitor(MonitorArgs),
    /// One-factor training sweeps over gamma, k, network size and N.
    Ablate(TrainArgs),
    /// Evaluates a policy with and without the backup search.
    BackupEval(BackupEvalArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Overrides the number of optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Planner {
    Cem,
    Shoot,
    Grad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Policy checkpoint.
    #[arg(long, conflicts_with = "planner")]
    pub policy: Option<PathBuf>,
    /// Planning baseline used instead of a policy.
    #[arg(long, value_enum)]
    pub planner: Option<Planner>,
    #[arg(long, value_enum, default_value = "off")]
    pub backup: Switch,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Closed-loop steps per episode.
    #[arg(long)]
    pub len: Option<usize>,
    /// Out-of-distribution initial states (ship-track only).
    #[arg(long)]
    pub ood: bool,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Trace file, or `-` for stdin.
    #[arg(long)]
    pub trace: String,
    /// Inline formula.
    #[arg(long, conflicts_with = "formula_file")]
    pub formula: Option<String>,
    #[arg(long)]
    pub formula_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BackupEvalArgs {
    #[arg(long, default_value = "ship-track")]
    pub benchmark: String,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub len: Option<usize>,
    #[arg(long)]
    pub ood: bool,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<stlnpc::Error> for CliError {
    fn from(e: stlnpc::Error) -> Self {
        let code = if matches!(e, stlnpc::Error::UnknownBenchmark(_) | stlnpc::Error::Config(_)) { 2 } else { 1 };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 1, message: e.to_string() }
    }
}

/// Runs one command and returns the artifact paths it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // A pool that already exists (repeated calls in one process) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = commands::load_config(cli)?;
    match &cli.command {
        Command::Train(a) => commands::train(cli, &cfg, a),
        Command::Eval(a) => commands::eval(cli, &cfg, a),
        Command::Monitor(a) => commands::monitor(cli, a),
        Command::Ablate(a) => commands::ablate(cli, &cfg, a),
        Command::BackupEval(a) => commands::backup_eval(cli, &cfg, a),
    }
}
