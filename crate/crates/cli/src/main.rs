//! `persreg`: simulate data, train personalized regression models, predict
//! and evaluate.
//!
//! Exit codes: 0 on success, 2 for input or validation errors, 3 when the
//! optimizer or another numerical routine fails.

mod commands;
mod config;
mod error;
mod model_file;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "persreg", version, about = "Personalized regression with learned covariate distances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance with known per-sample parameters.
    Simulate(SimulateArgs),
    /// Fit personalized models.
    Train(TrainArgs),
    /// Predict test rows from a trained model.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Number of covariates.
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    /// Rescale each predictor row to unit l1 norm.
    #[arg(long)]
    pub l1_normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Train,
    Test,
}

/// Row selection through the split stored in a simulation's meta.json.
#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, requires = "split")]
    pub part: Option<Part>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for persreg::Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => persreg::Task::Regression,
            TaskArg::Classification => persreg::Task::Classification,
        }
    }
}

/// Hyperparameter flags; each overrides the config file and the defaults.
#[derive(Args, Default)]
pub struct HyperArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub upsilon: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Fixed neighbor-ball radius on squared loading distance.
    #[arg(long, conflicts_with = "target_neighbors")]
    pub radius: Option<f64>,
    /// Re-pick the radius every step to get this many neighbors on average.
    #[arg(long)]
    pub target_neighbors: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub init_noise: Option<f64>,
    #[arg(long)]
    pub rate_floor: Option<f64>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub u: PathBuf,
    /// JSON list of per-column metrics ("absolute_difference" or "discrete").
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "regression")]
    pub task: TaskArg,
    /// JSON object of hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub seed: u64,
    /// Write per-step diagnostics to trace.jsonl.
    #[arg(long)]
    pub trace: bool,
    /// Check the center-of-mass bounds on every step (implies --trace).
    #[arg(long)]
    pub instrument: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub u: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Override the number of averaged neighbors stored in the model.
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// Also write the assembled parameter vector of every row.
    #[arg(long)]
    pub theta: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, value_enum, default_value = "regression")]
    pub task: TaskArg,
    /// Trained model, for parameter recovery against --omega-true.
    #[arg(long, requires = "omega_true")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub omega_true: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("persreg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
