//! `gridfault`: network validation, simulation, campaign generation,
//! training, evaluation and plot-data export.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod commands;
mod error;
mod plot;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use error::CliError;

#[derive(Debug, Parser, Serialize)]
#[command(name = "gridfault", version, about = "Synthetic PMU fault data and learned fault analysis")]
pub struct Cli {
    /// Seed for every random draw. Omitted: an entropy seed is drawn and recorded in run.json.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory. Defaults to `$GRIDFAULT_DATA_DIR/<subcommand>` or `./gridfault-out/<subcommand>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Check a network file and print its element counts.
    NetValidate(NetArgs),
    /// Simulate one scenario and write `pmu.csv` plus `scenario.json`.
    Simulate(SimulateArgs),
    /// Generate, split and write a labeled campaign.
    Dataset(DatasetArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset split.
    Eval(EvalArgs),
    /// Convert run or trace files into long-format `series,x,y` CSV.
    PlotData(PlotArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct NetArgs {
    /// Network JSON file. `ref23.json` falls back to the built-in copy when no such file exists.
    #[arg(long, default_value = "ref23.json")]
    pub net: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultArg {
    None,
    #[value(name = "3ph")]
    ThreePhase,
    Ll,
    Lg,
    Trip,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, value_enum, default_value = "none")]
    pub fault: FaultArg,
    /// Faulted bus id (bus faults).
    #[arg(long)]
    pub bus: Option<usize>,
    /// Zero-based branch index (branch trips).
    #[arg(long)]
    pub branch: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub t_apply: f64,
    #[arg(long, default_value_t = 1.2)]
    pub t_clear: f64,
    /// Fault resistance, per-unit.
    #[arg(long, default_value_t = 0.0)]
    pub zf_r: f64,
    /// Fault reactance, per-unit.
    #[arg(long, default_value_t = 0.0)]
    pub zf_x: f64,
    /// Disable the random generation/load step.
    #[arg(long)]
    pub no_fluctuation: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskArg {
    Forecast,
    FaultType,
    #[value(name = "locate-3phi")]
    Locate3Phi,
    #[value(name = "locate-ll")]
    LocateLl,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 10)]
    pub runs_per_bus: usize,
    /// Train share of the stratified split. Default: 2000/2300 for classification, 0.8 for the forecaster.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Worker threads. Output does not depend on this value.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Forecaster,
    Svm,
    Lstm,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelArg {
    Mag,
    MagAngle,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `dataset`.
    #[arg(long)]
    pub data: PathBuf,
    /// Model family. Default: forecaster for forecast data, lstm otherwise.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Input channels for classifiers. Default: mag-angle for the SVM, mag for LSTMs.
    #[arg(long, value_enum)]
    pub channels: Option<ChannelArg>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Global gradient-norm ceiling; 0 disables clipping.
    #[arg(long)]
    pub grad_clip: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideArg {
    Train,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub side: SideArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Pick from the input: a run directory or `pmu.csv` gives voltages, a trace CSV gives curves.
    Auto,
    /// Per-bus voltage magnitude against time.
    Voltage,
    /// Faulted bus against one non-faulted bus.
    FaultCompare,
    /// Training loss and accuracy against step.
    Trace,
    /// Per-bus maximum voltage deviation.
    Deviation,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    /// Run directory, `pmu.csv`, or `trace.csv`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub kind: PlotKind,
    /// Non-faulted reference bus for `fault-compare`. Default: the first other bus.
    #[arg(long)]
    pub reference_bus: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::NetValidate(_) => "net-validate",
            Command::Simulate(_) => "simulate",
            Command::Dataset(_) => "dataset",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::PlotData(_) => "plot-data",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
