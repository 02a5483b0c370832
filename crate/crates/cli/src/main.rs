mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::TrainArgs;

#[derive(Debug, Parser)]
#[command(name = "dmrm", version, about = "Dual-channel multi-hop reasoning for visual dialog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic grounded-dialog corpus
    Synth(SynthArgs),
    /// Validate a dataset and build its vocabulary
    Preprocess(PreprocessArgs),
    /// Train a model and write a checkpoint
    Train(TrainCmd),
    /// Rank candidates with a checkpoint and report retrieval metrics
    Eval(EvalArgs),
    /// Train and evaluate ablation variants side by side
    Ablate(AblateArgs),
    /// Dump reasoning and decoder attention for one round
    Trace(TraceArgs),
    /// Paired t-test between two per-question score dumps
    CompareScores(CompareArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Output directory (dataset.json, vocab.txt, features/)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub num_dialogs: usize,
    /// Rounds per dialog
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    /// Objects per image (K)
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub objects: u64,
    /// Candidate answers per round
    #[arg(long, default_value_t = 20)]
    pub candidates: usize,
    /// Random seed [default: $DMRM_SEED or 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Split tag written into the dataset
    #[arg(long, default_value = "train", value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Reuse an existing vocabulary (for held-out splits)
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Minimum token count when building a new vocabulary
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Overwrite a non-empty output directory
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, clap::Args)]
pub struct PreprocessArgs {
    /// Dataset JSON with raw text
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory holding <image_id>.feat files
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for dataset.json and vocab.txt
    #[arg(long)]
    pub out: PathBuf,
    /// Keep tokens seen at least this many times
    #[arg(long, default_value_t = 5)]
    pub min_count: usize,
    /// Use this vocabulary instead of building one (val/test splits)
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, clap::Args)]
pub struct TrainCmd {
    /// Corpus directory (dataset.json, vocab.txt, features/)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint path
    #[arg(long)]
    pub out: PathBuf,
    /// Training log [default: <out>.log.jsonl]
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Also write <out>.step<N> every N steps
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Corpus directory to evaluate
    #[arg(long)]
    pub corpus: PathBuf,
    /// Metrics report JSON [default: <ckpt>.eval.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-question score dump (newline-delimited JSON)
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct AblateArgs {
    /// Training corpus directory
    #[arg(long)]
    pub train_corpus: PathBuf,
    /// Held-out corpus directory
    #[arg(long)]
    pub val_corpus: PathBuf,
    /// Comma-separated variants: hops-N, no-track, no-locate, no-attd, full
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "hops-1,hops-2,hops-3,no-track,no-locate,no-attd,full"
    )]
    pub variants: Vec<String>,
    /// Comparison table JSON [default: ablation.json]
    #[arg(long, default_value = "ablation.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, clap::Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Dialog image id, or its 0-based position in the dataset
    #[arg(long)]
    pub dialog: String,
    /// 1-based round number
    #[arg(long)]
    pub round: usize,
    /// Trace JSON [default: trace.json]
    #[arg(long, default_value = "trace.json")]
    pub out: PathBuf,
    /// Write SVG charts into this directory
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Longest greedy answer
    #[arg(long, default_value_t = 8)]
    pub max_len: usize,
}

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    /// Score dump of model A
    pub a: PathBuf,
    /// Score dump of model B
    pub b: PathBuf,
    /// Result JSON [default: comparison.json]
    #[arg(long, default_value = "comparison.json")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Trace(a) => commands::trace(a),
        Command::CompareScores(a) => commands::compare_scores(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
