//! `acq` — the end-to-end pipeline binary.
//!
//! Every subcommand is driven by one TOML config (see [`config`]); the
//! same file describes a whole run, so a pipeline is just the commands in
//! order:
//!
//! ```text
//! acq synth      --config acq.toml     # synthetic dataset + true curves
//! acq build-tree --config acq.toml     # cost tree over the labels
//! acq train      --config acq.toml     # property-head net + metrics
//! acq predict    --config acq.toml     # per-(item, quota) value table
//! acq allocate   --config acq.toml     # budgeted quota plan
//! acq evaluate   --config acq.toml     # plan vs uniform-quota baseline
//! acq bench      --config acq.toml     # solver timing + sampling check
//! ```
//!
//! Errors print one `error: <kind>: <detail>` line on stderr and exit
//! non-zero, so wrappers can pattern-match failures.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("io: {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("core: {0}")]
    Core(#[from] acq_core::AcqError),
    #[error("data: {0}")]
    Data(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "acq",
    version,
    about = "Creative-quota pipeline: synthesize, train, predict, allocate, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline TOML config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override both synth.seed and train.seed (applied after --override).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Dot-path config override, e.g. --override train.epochs=4. Repeatable;
    /// values parse as TOML literals, with a bare-string fallback.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and its true cost curves.
    Synth,
    /// Build the cost tree from the dataset labels.
    BuildTree,
    /// Train the predictor against the tree and write the model.
    Train,
    /// Write predicted values for every (item, candidate quota) pair.
    Predict,
    /// Solve the budgeted quota assignment from the predicted values.
    Allocate,
    /// Compare allocated plans against a uniform-quota rule on fresh days.
    Evaluate,
    /// Time the solver across instance sizes and check sampled accuracy.
    Bench,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = config::load_config(path, cli.seed, &cli.overrides)?;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::BuildTree => commands::cmd_build_tree(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Predict => commands::cmd_predict(&cfg),
        Command::Allocate => commands::cmd_allocate(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Bench => commands::cmd_bench(&cfg),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.to_string().replace('\n', " "));
        std::process::exit(1);
    }
}
