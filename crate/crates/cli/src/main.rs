//! `tsg`: traffic scene graphs and acceleration prediction, end to end.
//!
//! Subcommands cover the whole pipeline: generate a synthetic benchmark,
//! clean recorded tracks, export scene graphs, train the single-step or
//! recurrent model, evaluate against the baselines and assemble reports.

mod commands;
mod dataset;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Failure {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<tsg_core::Error> for Failure {
    fn from(e: tsg_core::Error) -> Failure {
        match &e {
            tsg_core::Error::Parse { .. } | tsg_core::Error::Data(_) => Failure::data(e.to_string()),
            tsg_core::Error::Shape { .. } | tsg_core::Error::Numerical(_) => {
                Failure::numerical(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::data(e.to_string())
    }
}

pub type CliResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "tsg", version, about = "Traffic scene graphs and acceleration prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the deterministic synthetic benchmark dataset.
    Synth(SynthArgs),
    /// Parse, clean and re-emit a track CSV.
    Convert(ConvertArgs),
    /// Scene-graph exports.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint (plus baselines) on a dataset's test split.
    Eval(EvalArgs),
    /// Run the finite-difference gradient verification suite.
    Gradcheck(GradcheckArgs),
    /// Merge evaluation reports into one table.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Convert labeled frames to COO graph JSON files.
    Build(GraphBuildArgs),
    /// Render one frame's scene graph as DOT.
    ExportDot(GraphDotArgs),
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("TSG_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Args)]
struct SynthArgs {
    /// Benchmark seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output dataset directory (default: $TSG_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Total recordings; scales the default 40/20/20/40 template mix.
    #[arg(long)]
    recordings: Option<usize>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input track CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
    /// IoU threshold for duplicate removal.
    #[arg(long, default_value_t = 0.2)]
    dedup_threshold: f64,
    /// Exponential smoothing weight for speeds (1 = no smoothing).
    #[arg(long, default_value_t = 0.5)]
    smooth_alpha: f64,
    /// Recompute speeds from positional differences before smoothing.
    #[arg(long)]
    derive_speeds: bool,
    /// Keep only entities within the radius of this ego track.
    #[arg(long)]
    ego_id: Option<i64>,
    /// Radius for the ego filter, meters.
    #[arg(long, default_value_t = 80.0)]
    radius: f64,
}

#[derive(Args)]
struct GraphBuildArgs {
    /// Track CSV to read.
    #[arg(long)]
    tracks: PathBuf,
    /// Lane map JSON.
    #[arg(long)]
    map: PathBuf,
    /// Output directory for per-frame COO JSON files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Label horizon in frames.
    #[arg(long, default_value_t = 10)]
    delta: usize,
}

#[derive(Args)]
struct GraphDotArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    map: PathBuf,
    /// Frame index to render.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Recording id when the CSV holds several cases (default: first).
    #[arg(long)]
    case: Option<String>,
    /// Output DOT path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset directory with a manifest.json (as written by `synth`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Track CSV file or directory of CSVs (generic datasets).
    #[arg(long)]
    tracks: Option<PathBuf>,
    /// Lane map JSON shared by all recordings given via --tracks.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Assign this ego track id to every recording.
    #[arg(long)]
    ego_id: Option<i64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model kind: single or recurrent.
    #[arg(long, value_parser = ["single", "recurrent"])]
    model: Option<String>,
    /// Sequence length T for the recurrent model (default 10).
    #[arg(long)]
    seq_len: Option<usize>,
    /// Loss over all labeled entities or the ego entity only (default all).
    #[arg(long, value_parser = ["all", "ego"])]
    loss: Option<String>,
    /// Zero all edge features (trains the "no edge data" twin).
    #[arg(long)]
    ablate_edges: bool,
    /// Seed for the split, shuffling and parameter init (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the maximum number of epochs.
    #[arg(long)]
    epochs: Option<u32>,
    /// Override the initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// key=value config file; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoint and training log.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint JSON to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Add Mean and Zero baseline rows.
    #[arg(long)]
    baselines: bool,
    /// Zero all edge features before evaluating.
    #[arg(long)]
    ablate_edges: bool,
    /// Entity mode for the metrics.
    #[arg(long, value_parser = ["all", "ego"], default_value = "all")]
    loss: String,
    /// Dataset name used in the report rows.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// Output directory for the report files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1234)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation report JSON files to merge.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successful exits
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Convert(args) => commands::convert(args),
        Command::Graph(GraphCommand::Build(args)) => commands::graph_build(args),
        Command::Graph(GraphCommand::ExportDot(args)) => commands::graph_dot(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
        Command::Report(args) => commands::report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
