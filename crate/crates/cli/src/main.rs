//! `scanood`: scan-level OOD detection from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] scanood::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use scanood::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidInput(_) | E::SingleClass => 2,
                E::NoSegmentation(_) => 3,
                E::Format { .. } | E::Json(_) | E::DimensionMismatch { .. } | E::NonFinite(_) => 4,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "scanood", version, about = "Scan-level out-of-distribution detection for 3D tumor segmentation")]
struct Cli {
    /// Master seed. Every random draw is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic ID and OOD descriptor tables.
    Synth(SynthArgs),
    /// Place tumor-anchored (and optional background) ROIs from a mask.
    Rois(RoisArgs),
    /// Pool encoder stage maps of one ROI into a descriptor row.
    Pool(PoolArgs),
    /// Fit an RF-Deep or MD-Deep detector bundle.
    Train(TrainArgs),
    /// Score descriptor tables with a bundle, or logit volumes directly.
    Score(ScoreArgs),
    /// Matched-seed evaluation of score files.
    Eval(EvalArgs),
    /// Boundary versus interior tumor-logit statistics.
    Boundary(BoundaryArgs),
    /// Compare training strategies on synthetic cohorts over several seeds.
    Strategies(StrategiesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableExt {
    Bin,
    Csv,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Sample stream; `train` and `test` give disjoint scans of the same cohorts.
    #[arg(long, default_value = "all")]
    split: String,
    #[arg(long)]
    n_rois: Option<usize>,
    #[arg(long, value_enum, default_value = "bin")]
    format: TableExt,
}

#[derive(Debug, Args)]
struct RoisArgs {
    /// RVOL mask (sidecar `.json`).
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scan_id: Option<String>,
    #[arg(long)]
    n_rois: Option<usize>,
    #[arg(long)]
    crop_size: Option<usize>,
    /// Background ROIs to add.
    #[arg(long, default_value_t = 0)]
    background: usize,
}

#[derive(Debug, Args)]
struct PoolArgs {
    /// Stage feature maps (sidecar `.json`), any order.
    #[arg(long, num_args = 1.., required = true)]
    maps: Vec<PathBuf>,
    /// Comma-separated stage indices or `all`.
    #[arg(long, default_value = "all")]
    stages: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scan_id: String,
    #[arg(long, default_value_t = 0)]
    roi_index: u32,
    #[arg(long)]
    dataset: String,
    /// `id`/`0` or `ood`/`1`.
    #[arg(long)]
    label: String,
    /// Append to an existing table instead of replacing it.
    #[arg(long)]
    append: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, num_args = 1.., required = true)]
    tables: Vec<PathBuf>,
    #[arg(long, default_value = "rf-deep")]
    method: String,
    /// ds, ensemble, unified, lodo or lodo_plus.
    #[arg(long, default_value = "ds")]
    strategy: String,
    #[arg(long)]
    held_out: Option<String>,
    /// Background rows used by lodo_plus (default: all).
    #[arg(long)]
    background_count: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Restrict descriptors to these stages before training.
    #[arg(long)]
    stages: Option<String>,
    /// Bundle directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Detector bundle directory.
    #[arg(long, conflicts_with = "logits", requires = "tables")]
    bundle: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    tables: Vec<PathBuf>,
    /// Logit volume stems: `<stem>.f0.json` and `<stem>.f1.json`.
    #[arg(long, num_args = 1.., requires_all = ["method", "dataset", "label"])]
    logits: Vec<PathBuf>,
    /// maxsoftmax, maxlogit or energy (with --logits).
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    label: Option<String>,
    /// Minimum tumor probability for a voxel to count as tumor.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    stages: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportExt {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    scores: Vec<PathBuf>,
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    n_draws: Option<usize>,
    /// OOD scores per draw (default: number of ID scores).
    #[arg(long)]
    n_id: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportExt,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BoundaryArgs {
    #[arg(long, num_args = 1.., required = true)]
    logits: Vec<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StrategiesArgs {
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    let ctx = commands::Context {
        seed: cli.seed.or(cfg.seed),
        cfg,
    };
    if let Some(n) = cli.threads.or(ctx.cfg.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Rois(a) => commands::rois(&ctx, a),
        Command::Pool(a) => commands::pool(a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Boundary(a) => commands::boundary(a),
        Command::Strategies(a) => commands::strategies(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
