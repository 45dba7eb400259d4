//! `astprufer`: Prüfer-sequence AST representations, corpus preparation,
//! model training, decoding and scoring.
//!
//! Exit codes: 0 on success, 1 for input errors, 2 when an internal
//! invariant check fails.

mod io;
mod learn;
mod repr;
mod score;

use std::path::PathBuf;
use std::process::ExitCode;

use astprufer::corpus::InputRepr;
use astprufer::model::EncoderMode;
use astprufer::synth::SynthKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "astprufer",
    version,
    about = "Prüfer-sequence AST representations and code summarization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode ASTs as Prüfer codes (JSONL in, JSONL out)
    Encode(EncodeArgs),
    /// Rebuild AST-JSON from Prüfer code records
    Restore(RestoreArgs),
    /// Emit one representation per tree as JSONL token arrays
    Represent(RepresentArgs),
    /// Length statistics of every representation
    Stats(StatsArgs),
    /// Write a seeded synthetic corpus
    Synth(SynthArgs),
    /// Tokenize, split, build vocabularies and encode a corpus
    Dataset(DatasetArgs),
    /// Train the summarization model on a prepared dataset
    Train(TrainArgs),
    /// Greedy-decode comments for one split of a dataset
    Decode(DecodeArgs),
    /// Score hypotheses against references
    Score(ScoreArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output path (default: a fixed name inside $ASTPRUFER_OUT_DIR, or the current directory)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Record wall-clock duration in the manifest
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Corpus or AST JSONL
    pub input: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Include the syntactic Prüfer sequence
    #[arg(long)]
    pub syntactic: bool,
    /// Include the encoder input (syntactic sequence followed by the leaf tokens)
    #[arg(long)]
    pub encoder_input: bool,
    /// Include the context sequence
    #[arg(long)]
    pub context: bool,
    /// Skip malformed records instead of failing
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct RestoreArgs {
    /// Prüfer code JSONL as written by `encode`
    pub input: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReprKind {
    Prufer,
    Syntactic,
    EncoderInput,
    Context,
    Sbt,
    Bfs,
    Flat,
    Paths,
}

#[derive(Args, Debug)]
pub struct RepresentArgs {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: ReprKind,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Path cap for `--kind paths`
    #[arg(long, default_value_t = 200)]
    pub max_paths: usize,
    /// Path length cap (in nodes) for `--kind paths`
    #[arg(long, default_value_t = 12)]
    pub max_path_len: usize,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Length threshold for the percentage column
    #[arg(long, default_value_t = 200)]
    pub threshold: usize,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "toy")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Corpus JSONL (or Prüfer code JSONL carrying comments)
    pub input: PathBuf,
    /// Output directory
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub prufer_max: usize,
    #[arg(long, default_value_t = 500)]
    pub context_max: usize,
    #[arg(long, default_value_t = 30)]
    pub comment_max: usize,
    #[arg(long, default_value_t = 30000)]
    pub vocab_size: usize,
    /// Representation fed to the structural encoder
    #[arg(long, default_value = "prufer")]
    pub input_repr: InputRepr,
    /// Keep lexical tokens whole instead of splitting identifiers
    #[arg(long)]
    pub no_split: bool,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `dataset`
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start from the 256-unit full-scale sizes instead of the desk-scale 64
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.99)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.08)]
    pub init_scale: f64,
    #[arg(long, default_value_t = 30)]
    pub max_decode_len: usize,
    #[arg(long, default_value = "dual")]
    pub mode: EncoderMode,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory written by `dataset`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Maximum comment length (default: the checkpoint's setting)
    #[arg(long)]
    pub max_len: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Hypotheses: JSONL of token arrays
    #[arg(long)]
    pub hyps: PathBuf,
    /// References: JSONL of token arrays
    #[arg(long)]
    pub refs: PathBuf,
    /// Per-pair code lengths for the bucketed report: JSONL of integers or of objects with a "nodes" field
    #[arg(long)]
    pub lengths: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub bucket_width: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(a) => repr::encode(&a),
        Command::Restore(a) => repr::restore(&a),
        Command::Represent(a) => repr::represent(&a),
        Command::Stats(a) => repr::stats(&a),
        Command::Synth(a) => repr::synth(&a),
        Command::Dataset(a) => learn::dataset(&a),
        Command::Train(a) => learn::train(&a),
        Command::Decode(a) => learn::decode(&a),
        Command::Score(a) => score::score(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<io::InvariantViolation>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
