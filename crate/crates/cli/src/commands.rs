//! Subcommand implementations: prep, train, eval, predict, export-attention.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use bi_isca::data::synthetic::{synthetic_pairs, SyntheticOptions};
use bi_isca::data::{
    filter_by_length, import_pairs_tsv, import_workshop_csv, load_jsonl, make_split, save_jsonl,
    DatasetSplit, RawPair, Source,
};
use bi_isca::model::ModelParams;
use bi_isca::textprep::{normalize_and_tokenize, SlangDictionary, TokenizedPair};
use bi_isca::training::{evaluate, train_with_progress};
use bi_isca::weights::{load_weights, save_weights};

use crate::config::ResolvedConfig;
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn slang_dictionary(config: &ResolvedConfig) -> Result<SlangDictionary, CliError> {
    match &config.raw.slang_file {
        Some(path) => SlangDictionary::from_file(path).map_err(usage),
        None => Ok(SlangDictionary::builtin()),
    }
}

/// Build (or restore) a model per the configuration.
fn build_model(config: &ResolvedConfig, weights: Option<&Path>) -> Result<ModelParams, CliError> {
    let mut model = ModelParams::init(config.model.clone(), config.seed).map_err(usage)?;
    if let Some(path) = &config.raw.pretrained_embeddings {
        model.embedding.load_pretrained(path).map_err(usage)?;
    }
    if let Some(path) = weights {
        load_weights(path, &model.named_params()).map_err(usage)?;
    }
    Ok(model)
}

fn load_split(config: &ResolvedConfig) -> Result<DatasetSplit, CliError> {
    let path = config.dataset_path()?;
    let pairs = load_jsonl(path).map_err(usage)?;
    let filtered = filter_by_length(pairs, config.model.n);
    if filtered.is_empty() {
        return Err(usage(format!(
            "no pairs survive the < {} word filter in {}",
            config.model.n,
            path.display()
        )));
    }
    let dict = slang_dictionary(config)?;
    make_split(&filtered, config.balance, config.seed, &dict, config.model.n).map_err(usage)
}

fn run_dir(config: &ResolvedConfig) -> PathBuf {
    match &config.raw.out_dir {
        Some(dir) => dir.clone(),
        None => {
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from("runs").join(format!("run-{stamp}-seed{}", config.seed))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

// ── prep ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepFormat {
    Jsonl,
    Csv,
    Tsv,
}

impl std::str::FromStr for PrepFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(PrepFormat::Jsonl),
            "csv" => Ok(PrepFormat::Csv),
            "tsv" => Ok(PrepFormat::Tsv),
            other => Err(format!("unknown format {other:?}, expected jsonl, csv, or tsv")),
        }
    }
}

pub struct PrepArgs {
    pub input: Option<PathBuf>,
    pub format: PrepFormat,
    pub label: Option<u8>,
    pub source: Source,
    pub synthetic: Option<usize>,
    pub seed: u64,
    pub max_words: Option<usize>,
    pub output: PathBuf,
}

/// Convert a foreign layout (or generate a synthetic corpus) into the
/// canonical JSONL file.
pub fn cmd_prep(args: PrepArgs) -> Result<(), CliError> {
    let mut pairs: Vec<RawPair> = match (args.synthetic, &args.input) {
        (Some(count), None) => {
            let opts = match args.source {
                Source::Twitter => SyntheticOptions::twitter_scale(),
                Source::Reddit => SyntheticOptions::default(),
            };
            synthetic_pairs(count, args.seed, &opts)
        }
        (None, Some(input)) => match args.format {
            PrepFormat::Jsonl => load_jsonl(input).map_err(usage)?,
            PrepFormat::Csv => import_workshop_csv(input, args.source).map_err(usage)?,
            PrepFormat::Tsv => {
                let label = args.label.ok_or_else(|| {
                    usage("--label 0|1 is required for tsv input (two text columns, no label)")
                })?;
                import_pairs_tsv(input, label, args.source).map_err(usage)?
            }
        },
        (Some(_), Some(_)) => return Err(usage("--synthetic and --input are mutually exclusive")),
        (None, None) => return Err(usage("either --input or --synthetic is required")),
    };
    if let Some(max_words) = args.max_words {
        pairs = filter_by_length(pairs, max_words);
    }
    save_jsonl(&args.output, &pairs).map_err(runtime)?;
    println!("wrote {} pairs to {}", pairs.len(), args.output.display());
    Ok(())
}

// ── train ───────────────────────────────────────────────────────────────

pub fn cmd_train(config: &ResolvedConfig) -> Result<(), CliError> {
    let split = load_split(config)?;
    println!(
        "split: {} train / {} validation / {} test (n = {}, {:?})",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.n,
        config.balance,
    );
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(usage("dataset too small: empty train or validation split"));
    }

    let mut model = build_model(config, None)?;
    println!("model: {} parameters, seed {}", model.param_count(), config.seed);

    let history = train_with_progress(
        &mut model,
        &split.train,
        &split.validation,
        &config.train,
        |record| {
            println!(
                "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_acc {:.4}  val_f1 {:.4}",
                record.epoch,
                record.train_loss,
                record.val_loss,
                record.val_metrics.accuracy,
                record.val_metrics.macro_f1
            );
        },
    )
    .map_err(runtime)?;
    println!(
        "stopped at epoch {}, best epoch {} (weights restored)",
        history.stopped_epoch, history.best_epoch
    );

    let dir = run_dir(config);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    save_weights(dir.join("weights.json"), &model.named_params()).map_err(runtime)?;
    write_file(&dir.join("history.jsonl"), &history.to_jsonl())?;
    write_file(&dir.join("config.json"), &config.snapshot_json())?;

    if !split.test.is_empty() {
        let metrics = evaluate(&model, &split.test).map_err(runtime)?;
        println!("test: {metrics}");
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────────

pub fn cmd_eval(config: &ResolvedConfig, weights: &Path) -> Result<(), CliError> {
    let split = load_split(config)?;
    if split.test.is_empty() {
        return Err(usage("test split is empty; dataset too small"));
    }
    let model = build_model(config, Some(weights))?;
    let metrics = evaluate(&model, &split.test).map_err(runtime)?;
    println!("test pairs: {}", split.test.len());
    println!("{metrics}");
    let record = serde_json::to_string(&metrics).expect("metrics serialize");
    println!("{record}");

    let dir = run_dir(config);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join("metrics.json"), &record)?;
    Ok(())
}

// ── predict ─────────────────────────────────────────────────────────────

fn pair_from_texts(
    config: &ResolvedConfig,
    comment: &str,
    reply: &str,
) -> Result<TokenizedPair, CliError> {
    if normalize_and_tokenize(comment).is_empty() {
        return Err(usage("comment is empty after tokenization"));
    }
    if normalize_and_tokenize(reply).is_empty() {
        return Err(usage("reply is empty after tokenization"));
    }
    let dict = slang_dictionary(config)?;
    Ok(TokenizedPair::from_texts(comment, reply, 0, &dict, config.model.n))
}

pub fn cmd_predict(
    config: &ResolvedConfig,
    weights: &Path,
    comment: &str,
    reply: &str,
) -> Result<(), CliError> {
    let pair = pair_from_texts(config, comment, reply)?;
    let model = build_model(config, Some(weights))?;
    let prediction = model.predict(&pair).map_err(runtime)?;
    let record = json!({
        "prediction": prediction,
        "predicted_label": u8::from(prediction >= 0.5),
    });
    println!("{record}");
    Ok(())
}

// ── export-attention ────────────────────────────────────────────────────

pub const ATTENTION_SCHEMA: &str = "bi-isca-attention";
pub const ATTENTION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct ScoreVector {
    /// Which sentence's tokens these scores index: "comment" or "reply".
    scores_over: &'static str,
    raw: Vec<f64>,
    /// Min-max normalized for display; a constant vector maps to zeros.
    normalized: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct AttentionExport {
    schema: &'static str,
    version: u32,
    n: usize,
    /// Tokens after preprocessing, before padding (truncated to n).
    comment_tokens: Vec<String>,
    reply_tokens: Vec<String>,
    prediction: f64,
    predicted_label: u8,
    comment_on_reply_forward: ScoreVector,
    comment_on_reply_backward: ScoreVector,
    reply_on_comment_forward: ScoreVector,
    reply_on_comment_backward: ScoreVector,
}

/// `(x - min) / (max - min)` per vector; constant vectors map to all zeros.
fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

fn unpadded_tokens(config: &ResolvedConfig, text: &str) -> Result<Vec<String>, CliError> {
    let dict = slang_dictionary(config)?;
    let mut tokens =
        bi_isca::textprep::expand_slang(normalize_and_tokenize(text), &dict);
    tokens.truncate(config.model.n);
    Ok(tokens)
}

pub fn cmd_export_attention(
    config: &ResolvedConfig,
    weights: &Path,
    comment: &str,
    reply: &str,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let pair = pair_from_texts(config, comment, reply)?;
    let model = build_model(config, Some(weights))?;
    let out = model.predict_with_attention(&pair).map_err(runtime)?;

    let vector = |scores_over: &'static str, raw: Vec<f64>| ScoreVector {
        scores_over,
        normalized: min_max_normalize(&raw),
        raw,
    };
    let export = AttentionExport {
        schema: ATTENTION_SCHEMA,
        version: ATTENTION_SCHEMA_VERSION,
        n: config.model.n,
        comment_tokens: unpadded_tokens(config, comment)?,
        reply_tokens: unpadded_tokens(config, reply)?,
        prediction: out.prediction,
        predicted_label: u8::from(out.prediction >= 0.5),
        comment_on_reply_forward: vector("comment", out.comment_on_reply_fwd),
        comment_on_reply_backward: vector("comment", out.comment_on_reply_bwd),
        reply_on_comment_forward: vector("reply", out.reply_on_comment_fwd),
        reply_on_comment_backward: vector("reply", out.reply_on_comment_bwd),
    };
    let text = serde_json::to_string_pretty(&export).expect("export serializes");
    match output {
        Some(path) => write_file(path, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Read a `{"comment": ..., "reply": ...}` object from the first non-empty
/// line of a file.
pub fn read_pair_file(path: &Path) -> Result<(String, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read pair file {}: {e}", path.display())))?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| usage(format!("{} is empty", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| usage(format!("invalid pair file: {e}")))?;
    let field = |name: &str| -> Result<String, CliError> {
        value
            .get(name)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| usage(format!("pair file is missing string field {name:?}")))
    };
    Ok((field("comment")?, field("reply")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_normalize_definition_and_degenerate_case() {
        let out = min_max_normalize(&[1.0, 3.0, 2.0]);
        assert_eq!(out, vec![0.0, 1.0, 0.5]);
        assert_eq!(min_max_normalize(&[4.0, 4.0]), vec![0.0, 0.0]);
    }
}
