//! `lsm`: build liquids, generate synthetic data, train and evaluate the
//! readout, and benchmark the LIF kernels.
//!
//! Exit codes: 0 success, 2 configuration error (including bad usage),
//! 3 validation error (incompatible artifacts or shapes), 4 runtime error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsm_core::ErrorCategory;

#[derive(Parser, Debug)]
#[command(name = "lsm", version, about = "Spiking liquid state machine toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; overrides `output_dir` from the config.
    #[arg(long, short)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Patterns,
    Staged,
}

#[derive(Args, Debug, Clone)]
pub struct ReadoutFlags {
    /// Semantic masking at evaluation (staged task only).
    #[arg(long, value_enum)]
    pub mask: Option<Switch>,
    /// Number of averaging windows per encoding window (T/W).
    #[arg(long)]
    pub temporal_windows: Option<usize>,
    #[arg(long)]
    pub c_out: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a liquid topology and print its statistics.
    Build {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic train/test dataset pair.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Task name; overrides `dataset.task`.
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
    },
    /// Train the readout and report metrics.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        readout: ReadoutFlags,
        /// Topology file from `build`; built from the config when omitted.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Training set from `gen-data`; generated from the config when omitted.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Evaluate a trained readout on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        readout: ReadoutFlags,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Time scalar vs vectorized LIF layers and write a CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated neuron counts.
        #[arg(long, value_delimiter = ',')]
        neurons: Option<Vec<usize>>,
        /// Comma-separated batch sizes.
        #[arg(long, value_delimiter = ',')]
        batches: Option<Vec<usize>>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let category = err
        .chain()
        .find_map(|e| e.downcast_ref::<lsm_core::Error>())
        .map(lsm_core::Error::category);
    match category {
        Some(ErrorCategory::Config) => 2,
        Some(ErrorCategory::Validation) => 3,
        Some(ErrorCategory::Runtime) | None => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build { common } => commands::build(&common),
        Command::GenData { common, task } => commands::gen_data(&common, task),
        Command::Train {
            common,
            readout,
            topology,
            train,
            test,
        } => commands::train(&common, &readout, topology, train, test),
        Command::Eval {
            common,
            readout,
            model,
            topology,
            data,
        } => commands::eval(&common, &readout, &model, &topology, &data),
        Command::Bench {
            common,
            neurons,
            batches,
            steps,
            reps,
            warmup,
        } => commands::bench(&common, neurons, batches, steps, reps, warmup),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
