//! The `dgsan` command line: training, sampling, evaluation, randomized
//! verification and inspection.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage, config, input
//! or checkpoint errors, 3 numeric divergence during training.

mod commands;
pub mod config;
mod manifest;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use config::FileConfig;
pub use manifest::{git_sha256, RunManifest};

use crate::error::Error;

pub const DEFAULT_OUT: &str = "dgsan-out";

#[derive(Debug, Parser)]
#[command(name = "dgsan", version, about = "Self-adversarial training of explicit discrete generators")]
pub struct Cli {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a generator and write reports, checkpoints and a manifest
    Train(TrainArgs),
    /// Draw sentences from a checkpoint
    Sample(SampleArgs),
    /// Score a checkpoint against a test corpus
    Eval(EvalArgs),
    /// Run a randomized verification suite
    Verify(VerifyArgs),
    /// Describe a corpus or checkpoint, or write an oracle corpus
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Logit-table generator against a random target distribution
    DgsanTabular,
    /// Recurrent model on a text corpus with a growing target span
    DgsanSeq,
    /// Teacher-forced maximum likelihood baseline
    Mle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::DgsanTabular => "dgsan-tabular",
            Mode::DgsanSeq => "dgsan-seq",
            Mode::Mle => "mle",
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Training text, one sentence per line
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Support size of the tabular target
    #[arg(long)]
    pub domain_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Outer iterations per target length
    #[arg(long = "D", visible_alias = "outer-iters")]
    pub outer_iters: Option<usize>,
    /// Sampling temperature for fake data
    #[arg(long = "T", visible_alias = "temperature")]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub old_logprob_temperature: Option<f64>,
    /// Optimizer steps per outer iteration
    #[arg(long)]
    pub inner_epochs: Option<usize>,
    #[arg(long = "lr", visible_alias = "learning-rate")]
    pub learning_rate: Option<f64>,
    /// Budget in passes over the corpus
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Maximum sentence length
    #[arg(long = "M", visible_alias = "max-len")]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub d_emb: Option<usize>,
    #[arg(long)]
    pub d_h: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to vocab.txt beside the checkpoint
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long = "T", visible_alias = "temperature")]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tokens per sentence
    #[arg(long)]
    pub length: Option<usize>,
    /// Directory receiving samples.txt
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to vocab.txt beside the checkpoint
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Held-out text, one sentence per line
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Sentences to score instead of sampling from the checkpoint
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long = "T", visible_alias = "temperature")]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Directory receiving metrics.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// theorem1, theorem2, theorem3, theorem4, lemmas or gradcheck
    pub suite: String,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dimension of random distributions
    #[arg(long)]
    pub dim: Option<usize>,
    /// Directory receiving one JSON record per checked instance
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[command(subcommand)]
    pub what: InfoCommand,
}

#[derive(Debug, Subcommand)]
pub enum InfoCommand {
    /// Sentence, token and vocabulary counts of a text file
    Corpus {
        path: PathBuf,
        #[arg(long = "M", visible_alias = "max-len")]
        max_len: Option<usize>,
        #[arg(long)]
        min_freq: Option<usize>,
    },
    /// Parameter names and shapes of a checkpoint
    Checkpoint { path: PathBuf },
    /// Write a corpus drawn from a random Markov oracle, with its exact entropy
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub symbols: Option<usize>,
    #[arg(long = "M", visible_alias = "max-len")]
    pub max_len: Option<usize>,
    /// Sentences to draw
    #[arg(long)]
    pub count: Option<usize>,
    /// Sharpening exponent of the transition rows
    #[arg(long)]
    pub skew: Option<f64>,
    /// Every sentence has exactly max-len tokens
    #[arg(long)]
    pub fixed_len: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving corpus.txt and oracle.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> crate::Result<ExitCode> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => train::train(&a, &file).map(|_| ExitCode::SUCCESS),
        Command::Sample(a) => commands::sample(&a, &file).map(|_| ExitCode::SUCCESS),
        Command::Eval(a) => commands::eval(&a, &file).map(|_| ExitCode::SUCCESS),
        Command::Verify(a) => commands::verify(&a, &file),
        Command::Info(a) => commands::info(a, &file).map(|_| ExitCode::SUCCESS),
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
