use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "platoon", version, about = "GP-corrected MPC for mixed AV/HV platoons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the discrepancy GP and write a sparse model plus a report.
    TrainGp(TrainArgs),
    /// One-step RMSE of ARX and ARX+GP on driver traces.
    EvaluateModel(EvaluateArgs),
    /// Run one closed-loop scenario and write results, metrics and plots.
    Simulate(SimulateArgs),
    /// Run nominal and GP-MPC on identical plant seeds and compare.
    Compare(CompareArgs),
    /// Time both controllers on a scenario.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Nominal,
    Gp,
}

impl ControllerArg {
    pub fn key(self) -> &'static str {
        match self {
            ControllerArg::Nominal => "nominal",
            ControllerArg::Gp => "gp",
        }
    }
}

/// Source of driver traces: CSV files or synthetic truth-mode data.
#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    /// Trace CSV with columns `t,v_av,v_hv` (repeatable).
    #[arg(long = "trace", value_name = "PATH")]
    pub traces: Vec<PathBuf>,
    /// Generate this many synthetic traces instead of reading files.
    #[arg(long, value_name = "N", conflicts_with = "traces")]
    pub synthetic: Option<usize>,
    /// Synthetic trace length in seconds.
    #[arg(long, default_value_t = 200.0)]
    pub duration: f64,
    /// Synthetic observation noise standard deviation.
    #[arg(long, default_value_t = 0.05)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0.3)]
    pub g_gain: f64,
    #[arg(long, default_value_t = 0.5)]
    pub g_slope: f64,
    #[arg(long, default_value_t = 0.02)]
    pub g_drift: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: TraceArgs,
    /// Held-out trace for the RMSE table (repeatable). Synthetic runs
    /// generate their own.
    #[arg(long = "held-out", value_name = "PATH")]
    pub held_out: Vec<PathBuf>,
    /// Share of discrepancy rows used for training.
    #[arg(long, default_value_t = 0.2)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of inducing points.
    #[arg(short = 'm', long = "inducing", default_value_t = 20)]
    pub inducing: usize,
    /// Keep the k-means inducing inputs instead of refining them.
    #[arg(long)]
    pub fixed_inducing: bool,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Report file (defaults to `<out>.report.txt`).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Also write the synthetic traces into this directory.
    #[arg(long, value_name = "DIR")]
    pub save_traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: TraceArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the table here as well as to stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Preset name (emergency, realtime, rest, drive-cycle) or config path.
    #[arg(long, required_unless_present = "manifest")]
    pub scenario: Option<String>,
    #[arg(long, value_enum, default_value_t = ControllerArg::Nominal)]
    pub controller: ControllerArg,
    /// Sparse GP model for the controller.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Model driving a model-mode plant (defaults to `--model`).
    #[arg(long, value_name = "PATH")]
    pub plant_model: Option<PathBuf>,
    /// Scenario override `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Record wall-clock solve times in the outputs.
    #[arg(long)]
    pub timing: bool,
    /// Re-run exactly what a previous manifest describes.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["scenario", "model", "plant_model", "overrides", "timing"])]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, default_value = "emergency")]
    pub scenario: String,
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Number of plant seeds, starting at the scenario seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Worker threads for the runs (1 keeps timings undisturbed).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "realtime")]
    pub scenario: String,
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Repetitions per controller.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}
