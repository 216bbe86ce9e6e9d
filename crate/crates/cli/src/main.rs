//! `pulsetrain`: detect, train, classify, eval and synth from one binary.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pulsetrain", version, about = "Detect and classify periodic pulse trains in WAV recordings")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Run configuration (TOML). Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 for one per CPU.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run seed; every random consumer derives its own seed from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect pulse-train events and write them with their features.
    Detect(DetectArgs),
    /// Train the random forest on a labeled events CSV.
    Train(TrainArgs),
    /// Score and label events with a trained model.
    Classify(ClassifyArgs),
    /// Compare predicted events against a truth CSV.
    Eval(EvalArgs),
    /// Generate synthetic clips with their truth CSV.
    Synth(SynthArgs),
    /// Detect, classify and optionally evaluate in one pass.
    Run(RunArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// WAV file or directory of WAV files; repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub channel: Option<usize>,
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub hop_s: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Events CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-slice diagnostics CSV.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Energy projection of every slice as a long-format CSV.
    #[arg(long, value_name = "CSV")]
    pub dump_projections: Option<PathBuf>,
    /// Truth CSV used to label events minke or non-minke for training.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled events CSV.
    #[arg(long)]
    pub features: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Hold out part of the events (see `eval.train_fraction`) and report on it.
    #[arg(long)]
    pub holdout: bool,
    /// JSON report with training and held-out figures.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    /// Minimum fraction of trees voting minke.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Classified events CSV.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Number of analyzed slices.
    #[arg(long)]
    pub slices: u64,
    /// Hours of analyzed audio.
    #[arg(long)]
    pub hours: Option<f64>,
    /// JSON report to write.
    #[arg(long)]
    pub out: PathBuf,
    /// ROC CSV; defaults to roc.csv beside the report.
    #[arg(long)]
    pub roc: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["spec", "preset"])))]
pub struct SynthArgs {
    /// Clip description (TOML).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Built-in layout: minke, distractor, noise or mixed.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output directory for events.csv, report.json and the optional files.
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate against `--truth`.
    #[arg(long, requires = "truth")]
    pub eval: bool,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Write roc.csv from a sweep over the decision threshold.
    #[arg(long, requires = "eval")]
    pub sweep: bool,
    /// Also write diagnostics.csv.
    #[arg(long)]
    pub diagnostics: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => commands::detect(&cli.global, &a),
        Command::Train(a) => commands::train(&cli.global, &a),
        Command::Classify(a) => commands::classify(&cli.global, &a),
        Command::Eval(a) => commands::eval(&cli.global, &a),
        Command::Synth(a) => commands::synth(&cli.global, &a),
        Command::Run(a) => commands::run(&cli.global, &a),
        Command::Config => commands::print_config(&cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
