// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use drydown_core::pelt::Penalty;

#[derive(Debug, Parser)]
#[command(name = "drydown", version, about = "Changepoint detection and drydown fitting for soil-moisture series")]
pub struct Cli {
    /// TOML run configuration; flags given on the command line override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for replicates, inputs and penalty grids.
    #[arg(long, global = true, env = "DRYDOWN_JOBS", value_name = "N")]
    pub jobs: Option<usize>,

    /// Suppress the per-stage log on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one or more series and fit a drydown to every segment.
    Detect(DetectArgs),
    /// Generate replicate series from a simulation scenario.
    Simulate(SimulateArgs),
    /// Score detect outputs against simulated ground truth.
    Evaluate(EvaluateArgs),
    /// Run detection over a penalty grid and score it against rainfall.
    Sweep(SweepArgs),
}

/// Ingestion and preprocessing of a soil-moisture CSV.
#[derive(Debug, Args, Default)]
pub struct InputArgs {
    #[arg(long, value_name = "NAME")]
    pub time_column: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub value_column: Option<String>,
    /// Sampling step, e.g. `30m`, `1h`.
    #[arg(long, value_name = "STEP")]
    pub step: Option<String>,
    /// Longest run of missing points filled by interpolation.
    #[arg(long, value_name = "POINTS")]
    pub max_gap: Option<usize>,
    /// Keep every k-th point.
    #[arg(long, value_name = "K")]
    pub subsample: Option<usize>,
    /// Upper limit applied to soil-moisture values.
    #[arg(long, value_name = "VALUE")]
    pub cap: Option<f64>,
    /// Do not cap values.
    #[arg(long, conflicts_with = "cap")]
    pub no_cap: bool,
}

/// Detection parameters.
#[derive(Debug, Args, Default)]
pub struct PeltArgs {
    /// `bic` or a non-negative number.
    #[arg(long, value_name = "LAMBDA")]
    pub penalty: Option<Penalty>,
    /// Minimum segment length in steps (after subsampling).
    #[arg(long, value_name = "STEPS")]
    pub min_seg_len: Option<usize>,
    /// Smallest allowed jump amplitude alpha1.
    #[arg(long, value_name = "VALUE")]
    pub min_jump: Option<f64>,
    /// Search every candidate instead of pruning.
    #[arg(long)]
    pub no_pruning: bool,
    /// Try a single fit from the neighbouring segment's solution first.
    #[arg(long)]
    pub warm_start: bool,
    /// Run only the best k ranked starting points per fit (0 runs all).
    #[arg(long, value_name = "K")]
    pub screen_starts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input CSV files; with more than one, each gets its own subdirectory.
    #[arg(long, short, required = true, num_args = 1.., value_name = "CSV")]
    pub input: Vec<PathBuf>,
    #[arg(long, short, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub series: InputArgs,
    #[command(flatten)]
    pub pelt: PeltArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of 1a, 1b, 2a, 2b, 3a, 3b.
    #[arg(long, value_name = "ID")]
    pub scenario: Option<String>,
    /// Series length.
    #[arg(long, short, value_name = "N")]
    pub n: Option<usize>,
    #[arg(long, value_name = "COUNT")]
    pub replicates: Option<u64>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    #[arg(long, short, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Truth JSON files written by `simulate`.
    #[arg(long, required = true, num_args = 1.., value_name = "JSON")]
    pub truth: Vec<PathBuf>,
    /// Output directories written by `detect`, paired with `--truth` in order.
    #[arg(long, required = true, num_args = 1.., value_name = "DIR")]
    pub detected: Vec<PathBuf>,
    /// Matching window: detections closer than this many steps match.
    #[arg(long, value_name = "STEPS")]
    pub window: Option<usize>,
    #[arg(long, short, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, short, value_name = "CSV")]
    pub input: PathBuf,
    /// Precipitation CSV on the same clock as the input.
    #[arg(long, value_name = "CSV")]
    pub precip: PathBuf,
    #[arg(long, value_name = "NAME")]
    pub precip_time_column: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub precip_value_column: Option<String>,
    /// Precipitation sampling step; defaults to the soil step.
    #[arg(long, value_name = "STEP")]
    pub precip_step: Option<String>,
    #[arg(long, value_name = "COUNT")]
    pub points: Option<usize>,
    #[arg(long, value_name = "LAMBDA")]
    pub lambda_min: Option<f64>,
    #[arg(long, value_name = "LAMBDA")]
    pub lambda_max: Option<f64>,
    /// Annotation region length in steps.
    #[arg(long, value_name = "STEPS")]
    pub region_len: Option<usize>,
    #[arg(long, value_name = "MM")]
    pub low_threshold: Option<f64>,
    #[arg(long, value_name = "MM")]
    pub high_threshold: Option<f64>,
    /// Rainfall depth above which an instant counts as an expert changepoint.
    #[arg(long, value_name = "MM")]
    pub expert_threshold: Option<f64>,
    #[arg(long, short, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub series: InputArgs,
    #[command(flatten)]
    pub pelt: PeltArgs,
}
