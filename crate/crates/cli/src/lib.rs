//! Command-line front end: detection runs, evaluation, obfuscation,
//! significance tests and dataset exports.
//!
//! Exit codes: 0 success, 1 partial failure, 2 configuration or input
//! error, 3 id mismatch between gold and predictions, 4 strict-mode
//! violation.

pub mod commands;
pub mod config;
pub mod detections;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use planlens::corpus::CorpusError;
use thiserror::Error;

use config::{Mode, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    IdMismatch(String),
    #[error("{0}")]
    Strict(String),
    #[error("{0}")]
    Failed(String),
    #[error("{failed} of {total} items failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Partial { .. } | CliError::Failed(_) => 1,
            CliError::Config(_) | CliError::Io { .. } | CliError::Corpus(_) => 2,
            CliError::IdMismatch(_) => 3,
            CliError::Strict(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "planlens", version, about = "Detect programming plans in student submissions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every submission in a corpus with one backend.
    Detect(DetectArgs),
    /// Score a detection file against gold labels.
    Eval(EvalArgs),
    /// Rename identifiers in every submission.
    Obfuscate(ObfuscateArgs),
    /// Wilcoxon signed-rank test between two detection files.
    Compare(CompareArgs),
    /// Drop structurally identical submissions.
    Dedup(DedupArgs),
    /// Stratified sample per problem and outcome.
    Sample(SampleArgs),
    /// Check a corpus against the schema and print its manifest.
    Validate(ValidateArgs),
    /// Prompt bundle operations.
    #[command(subcommand)]
    Prompt(PromptCommand),
    /// Fine-tuning dataset operations.
    #[command(subcommand)]
    Finetune(FinetuneCommand),
    /// kNN index operations.
    #[command(subcommand)]
    Index(IndexCommand),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// TOML file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corpus holding the gold labels.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Detection file to score.
    #[arg(long)]
    pub detections: PathBuf,
    /// Detections on the obfuscated corpus; adds an ablation table.
    #[arg(long)]
    pub against: Option<PathBuf>,
    /// Directory for metrics.txt, summary.csv and per_plan.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ObfuscateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output corpus; rename maps go next to it as `<stem>.renames.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fail on the first item that cannot be obfuscated.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Number of comparisons for the Bonferroni correction.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Force the exact or normal p-value.
    #[arg(long, value_enum)]
    pub method: Option<PValue>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PValue {
    Exact,
    Normal,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Write the manifest here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PromptCommand {
    /// Write the prompt bundle as JSON and print its hash.
    Export {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "fewshot")]
        mode: Mode,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum FinetuneCommand {
    /// Write chat-format training records and a manifest.
    Export {
        #[arg(long)]
        out: PathBuf,
        /// Labeled submissions to export instead of the exemplars.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        exemplars: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Embed the exemplars and save the index.
    Build(DetectArgs),
}

/// Runs one invocation, writing reports to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
