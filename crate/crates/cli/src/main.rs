//! `edmrec` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edmrec::data::Regime;
use edmrec::eval::Method;
use edmrec::Representation;
use serde::Serialize;

pub const COMMANDS: [&str; 7] = ["synth", "split", "learn-dict", "train-net", "recover", "evaluate", "sweep"];

#[derive(Debug, Parser)]
#[command(
    name = "edmrec",
    version,
    about = "Recover occluded joints in 2D pose distance matrices",
    args_override_self = true
)]
pub struct Cli {
    /// TOML file with default flag values (top-level keys and a [command] table)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-sample work (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Directory that relative paths are resolved against
    #[arg(long, global = true, env = "EDMREC_DATA_DIR", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// More log output (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic poses as JSON Lines
    Synth(SynthArgs),
    /// Split a dataset into 5/6 training and 1/6 test records
    Split(SplitArgs),
    /// Learn a sparse-coding dictionary from complete poses
    LearnDict(LearnDictArgs),
    /// Train a recovery, 2D-to-3D or stacked network
    TrainNet(TrainNetArgs),
    /// Recover occluded EDMs for every record of a dataset
    Recover(RecoverArgs),
    /// Per-category error tables for recovery methods and pipelines
    Evaluate(EvaluateArgs),
    /// Dictionary size sweep: error and time per sample against k
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of poses
    #[arg(long, default_value_t = 5000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Camera focal length in pixels
    #[arg(long, default_value_t = 1145.0)]
    pub focal_length: f64,
    /// Output JSON Lines file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LassoArgs {
    /// Sparsity weight for coding
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Solver tolerance on the KKT residual
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct LearnArgs {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Atoms used fewer times per epoch are replaced
    #[arg(long, default_value_t = 1)]
    pub replacement_threshold: usize,
    /// Factor applied to the accumulated statistics after each epoch
    #[arg(long, default_value_t = 0.0)]
    pub statistics_decay: f64,
    /// Samples the per-epoch objective is measured on
    #[arg(long, default_value_t = 200)]
    pub validation_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct LearnDictArgs {
    /// Training poses (JSON Lines)
    #[arg(long)]
    pub train: PathBuf,
    /// Number of atoms
    #[arg(long, default_value_t = 256)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub lasso: LassoArgs,
    #[command(flatten)]
    pub learn: LearnArgs,
    /// Dictionary file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Training report (default: <out>.report.json)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Occluded 2D EDM to complete 2D EDM
    Recover2d,
    /// Complete 2D EDM to 3D EDM
    Regress3d,
    /// Fine-tune a recovery net and a 2D-to-3D net end to end
    Stack,
}

#[derive(Debug, Args, Serialize)]
pub struct NetArgs {
    /// Channels of the hidden layers
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Initial weights are uniform in ±scale/sqrt(fan_in)
    #[arg(long, default_value_t = 6f64.sqrt())]
    pub init_scale: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainNetArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Training poses (JSON Lines)
    #[arg(long)]
    pub train: PathBuf,
    /// Validation poses for the loss curve
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// How occluded joints are encoded in the input: zero or average
    #[arg(long, default_value = "zero", value_parser = parse::<Representation>)]
    pub representation: Representation,
    /// Occlusions per training record: 1, 2, 3, ... or mixed
    #[arg(long, default_value = "mixed", value_parser = parse::<Regime>)]
    pub regime: Regime,
    #[arg(long, default_value_t = 1)]
    pub mask_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub net: NetArgs,
    /// Recovery model to start from (stack)
    #[arg(long)]
    pub recover_model: Option<PathBuf>,
    /// 2D-to-3D model to start from (stack)
    #[arg(long)]
    pub regress_model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV (default: <out>.curve.csv)
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RecoverArgs {
    /// identity, zero-net, ave-net or sparse
    #[arg(long, value_parser = parse::<Method>)]
    pub method: Method,
    /// Network file (zero-net, ave-net)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dictionary file (sparse)
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Input poses (JSON Lines)
    #[arg(long)]
    pub input: PathBuf,
    /// Occlusion plan; sampled from --regime and --mask-seed when absent
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long, default_value = "mixed", value_parser = parse::<Regime>)]
    pub regime: Regime,
    #[arg(long, default_value_t = 1)]
    pub mask_seed: u64,
    #[command(flatten)]
    pub lasso: LassoArgs,
    /// JSON Lines with one recovered EDM per record
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Comma-separated methods: identity, zero-net, ave-net, sparse
    #[arg(long, value_delimiter = ',', default_value = "identity,sparse", value_parser = parse::<Method>)]
    pub methods: Vec<Method>,
    /// Test poses (JSON Lines)
    #[arg(long)]
    pub test: PathBuf,
    /// Occlusion plan file (single regime); overrides --regimes
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Comma-separated regimes: 1, 2, 3, mixed
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,mixed", value_parser = parse::<Regime>)]
    pub regimes: Vec<Regime>,
    #[arg(long, default_value_t = 1)]
    pub mask_seed: u64,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[arg(long)]
    pub zero_model: Option<PathBuf>,
    #[arg(long)]
    pub ave_model: Option<PathBuf>,
    /// 2D-to-3D model; adds pipeline rows scored against 3D EDMs
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    /// Stacked model; adds a fine-tuned pipeline row
    #[arg(long)]
    pub stacked_model: Option<PathBuf>,
    /// Representation the identity baseline feeds to the regressor
    #[arg(long, default_value = "zero", value_parser = parse::<Representation>)]
    pub baseline_representation: Representation,
    #[command(flatten)]
    pub lasso: LassoArgs,
    /// Directory for report.json, table.csv, timing.json and traces
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated dictionary sizes
    #[arg(long, value_delimiter = ',', default_value = "100,250,500,1000,2000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = "mixed", value_parser = parse::<Regime>)]
    pub regime: Regime,
    #[arg(long, default_value_t = 1)]
    pub mask_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub lasso: LassoArgs,
    /// Lambda used while learning each dictionary (defaults to --lambda)
    #[arg(long)]
    pub learn_lambda: Option<f64>,
    #[command(flatten)]
    pub learn: LearnArgs,
    /// Directory for sweep.json, err_vs_k.txt and the timing files
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr<Err = edmrec::Error>,
{
    s.parse().map_err(|e: edmrec::Error| e.to_string())
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let args = match config::expand(raw, &COMMANDS) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
