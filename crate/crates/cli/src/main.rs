//! Command-line surface for the sarcasm detector: dataset preparation,
//! training, evaluation, single-pair prediction, and attention-map export.
//!
//! Exit codes: 0 success, 1 runtime fault, 2 usage/configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{PrepArgs, PrepFormat};
use config::{Overrides, ResolvedConfig, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable/invalid config, incompatible inputs: exit 2.
    Usage(String),
    /// Faults while doing the work: exit 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bi-isca",
    about = "Sarcasm detection over comment/reply pairs with bidirectional \
             inter-sentence contextual attention",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset to the canonical JSONL layout, or generate a
    /// synthetic corpus.
    Prep {
        /// Input file (jsonl, workshop csv, or comment<TAB>reply tsv).
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        /// Input layout: jsonl, csv, or tsv.
        #[arg(long, default_value = "jsonl")]
        format: PrepFormat,
        /// Label attached to every pair of a tsv file (it has no label column).
        #[arg(long)]
        label: Option<u8>,
        /// Source convention to tag pairs with: reddit or twitter.
        #[arg(long, default_value = "reddit")]
        source: bi_isca::data::Source,
        /// Generate this many synthetic pairs instead of reading a file.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Seed for synthetic generation.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop pairs whose comment or reply has this many words or more.
        #[arg(long)]
        max_words: Option<usize>,
        /// Where to write the canonical JSONL.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a model and write weights, history, and the config snapshot.
    Train {
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate saved weights on the test split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Weight file written by `train`.
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Predict one comment/reply pair.
    Predict {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        comment: String,
        #[arg(long)]
        reply: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Export the four attention score vectors for one pair as JSON.
    ExportAttention {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        /// Inline comment text (alternative to --pair-file).
        #[arg(long, requires = "reply", conflicts_with = "pair_file")]
        comment: Option<String>,
        /// Inline reply text.
        #[arg(long, requires = "comment", conflicts_with = "pair_file")]
        reply: Option<String>,
        /// JSON file with {"comment": ..., "reply": ...} on its first line.
        #[arg(long)]
        pair_file: Option<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn resolve(path: Option<&PathBuf>, overrides: &Overrides) -> Result<ResolvedConfig, CliError> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(overrides);
    config.resolve()
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Prep { input, format, label, source, synthetic, seed, max_words, output } => {
            commands::cmd_prep(PrepArgs {
                input,
                format,
                label,
                source,
                synthetic,
                seed,
                max_words,
                output,
            })
        }
        Command::Train { config, overrides } => {
            let resolved = resolve(config.as_ref(), &overrides)?;
            commands::cmd_train(&resolved)
        }
        Command::Eval { config, weights, overrides } => {
            let resolved = resolve(config.as_ref(), &overrides)?;
            commands::cmd_eval(&resolved, &weights)
        }
        Command::Predict { config, weights, comment, reply, overrides } => {
            let resolved = resolve(config.as_ref(), &overrides)?;
            commands::cmd_predict(&resolved, &weights, &comment, &reply)
        }
        Command::ExportAttention {
            config,
            weights,
            comment,
            reply,
            pair_file,
            output,
            overrides,
        } => {
            let resolved = resolve(config.as_ref(), &overrides)?;
            let (comment, reply) = match (comment, reply, pair_file) {
                (Some(c), Some(r), None) => (c, r),
                (None, None, Some(path)) => commands::read_pair_file(&path)?,
                _ => {
                    return Err(CliError::Usage(
                        "provide either --comment and --reply, or --pair-file".to_string(),
                    ))
                }
            };
            commands::cmd_export_attention(&resolved, &weights, &comment, &reply, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
