//! Dataset ingestion, length filtering, class balancing, and splitting.
//!
//! The canonical interchange format is JSONL with one record per line:
//!
//! ```json
//! {"comment": "parent text", "reply": "target text", "label": 1, "source": "reddit"}
//! ```
//!
//! `source` is optional metadata (default `reddit`). Importers for other
//! layouts are thin adapters onto this: a two-column `comment<TAB>reply` TSV
//! with the label supplied per file, and the shared-task CSV layout with
//! `context,response,label` columns where the context cell may hold a JSON
//! array of utterances that are each paired independently with the response.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::{SlangDictionary, TokenizedPair};

pub mod synthetic;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path} line {line}: {msg}")]
    Value { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("data: {0}")]
    Contract(String),
}

/// Where a pair came from; fixes the conventional sequence length
/// (20 for Reddit, 40 for Twitter) and default batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Reddit,
    Twitter,
}

impl Source {
    pub fn default_n(self) -> usize {
        match self {
            Source::Reddit => 20,
            Source::Twitter => 40,
        }
    }

    pub fn default_batch_size(self) -> usize {
        match self {
            Source::Reddit => 2000,
            Source::Twitter => 500,
        }
    }
}

impl std::str::FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reddit" => Ok(Source::Reddit),
            "twitter" => Ok(Source::Twitter),
            other => Err(format!("unknown source {other:?}, expected reddit or twitter")),
        }
    }
}

/// One raw comment/reply pair with its binary label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub comment: String,
    pub reply: String,
    pub label: u8,
    #[serde(default = "default_source")]
    pub source: Source,
}

fn default_source() -> Source {
    Source::Reddit
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    comment: String,
    reply: String,
    label: i64,
    #[serde(default)]
    source: Option<Source>,
}

/// Parse the canonical JSONL file. Malformed lines are reported with their
/// 1-based line number.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<RawPair>, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path)
        .map_err(|source| DataError::Io { path: display.clone(), source })?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DataError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            path: display.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if !(0..=1).contains(&record.label) {
            return Err(DataError::Value {
                path: display,
                line: line_no,
                msg: format!("label {} is not 0 or 1", record.label),
            });
        }
        pairs.push(RawPair {
            comment: record.comment,
            reply: record.reply,
            label: record.label as u8,
            source: record.source.unwrap_or(Source::Reddit),
        });
    }
    Ok(pairs)
}

/// Write pairs in the canonical JSONL layout.
pub fn save_jsonl(path: impl AsRef<Path>, pairs: &[RawPair]) -> Result<(), DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut file = std::fs::File::create(path)
        .map_err(|source| DataError::Io { path: display.clone(), source })?;
    for pair in pairs {
        let line = serde_json::to_string(pair).expect("pairs serialize");
        writeln!(file, "{line}").map_err(|source| DataError::Io { path: display.clone(), source })?;
    }
    Ok(())
}

/// Whitespace word count, taken before punctuation splitting.
fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keep a pair only when BOTH sides have strictly fewer than `max_words`
/// whitespace-separated words.
pub fn filter_by_length(pairs: Vec<RawPair>, max_words: usize) -> Vec<RawPair> {
    assert!(max_words >= 1, "filter_by_length: max_words must be >= 1");
    pairs
        .into_iter()
        .filter(|p| word_count(&p.comment) < max_words && word_count(&p.reply) < max_words)
        .collect()
}

/// Class-ratio policy for [`make_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    /// Subsample the majority class down to the minority count.
    Balanced,
    /// Subsample toward a 20:80 sarcastic to non-sarcastic ratio.
    Imbalanced,
}

impl std::str::FromStr for BalanceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "balanced" => Ok(BalanceMode::Balanced),
            "imbalanced" => Ok(BalanceMode::Imbalanced),
            other => Err(format!("unknown balance mode {other:?}")),
        }
    }
}

/// Tokenized train/validation/test split.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<TokenizedPair>,
    pub validation: Vec<TokenizedPair>,
    pub test: Vec<TokenizedPair>,
    pub balance_mode: BalanceMode,
    pub n: usize,
}

fn rounded_tenth(count: usize) -> usize {
    ((count as f64) * 0.1).round() as usize
}

/// Seeded, stratified split: rebalance per `mode`, carve 10% off for test,
/// then 10% of the remainder for validation, class by class, and tokenize.
pub fn make_split(
    pairs: &[RawPair],
    mode: BalanceMode,
    seed: u64,
    dict: &SlangDictionary,
    n: usize,
) -> Result<DatasetSplit, DataError> {
    let mut positives: Vec<&RawPair> = pairs.iter().filter(|p| p.label == 1).collect();
    let mut negatives: Vec<&RawPair> = pairs.iter().filter(|p| p.label == 0).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(DataError::Contract(format!(
            "both classes must be present, got {} sarcastic and {} non-sarcastic",
            positives.len(),
            negatives.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let (pos_n, neg_n) = match mode {
        BalanceMode::Balanced => {
            let m = positives.len().min(negatives.len());
            (m, m)
        }
        BalanceMode::Imbalanced => {
            // Target 1:4. Whichever class is over-represented gets cut.
            let pos_n = positives.len().min(negatives.len() / 4);
            let neg_n = negatives.len().min(4 * pos_n);
            if pos_n == 0 {
                return Err(DataError::Contract(
                    "too few pairs to form a 20:80 split".to_string(),
                ));
            }
            (pos_n, neg_n)
        }
    };
    positives.truncate(pos_n);
    negatives.truncate(neg_n);

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for class in [&positives, &negatives] {
        let test_k = rounded_tenth(class.len());
        let val_k = rounded_tenth(class.len() - test_k);
        test.extend(class[..test_k].iter().copied());
        validation.extend(class[test_k..test_k + val_k].iter().copied());
        train.extend(class[test_k + val_k..].iter().copied());
    }
    train.shuffle(&mut rng);
    validation.shuffle(&mut rng);
    test.shuffle(&mut rng);

    let tokenize = |set: Vec<&RawPair>| -> Vec<TokenizedPair> {
        set.into_iter()
            .map(|p| TokenizedPair::from_texts(&p.comment, &p.reply, p.label, dict, n))
            .collect()
    };
    Ok(DatasetSplit {
        train: tokenize(train),
        validation: tokenize(validation),
        test: tokenize(test),
        balance_mode: mode,
        n,
    })
}

/// A reply with multiple contextual parent utterances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiContextRecord {
    pub contexts: Vec<String>,
    pub reply: String,
    pub label: u8,
    pub source: Source,
}

/// Pair every context utterance independently with the reply.
pub fn explode_multi_context(record: &MultiContextRecord) -> Result<Vec<RawPair>, DataError> {
    if record.contexts.is_empty() {
        return Err(DataError::Contract("record has no context utterances".to_string()));
    }
    Ok(record
        .contexts
        .iter()
        .map(|context| RawPair {
            comment: context.clone(),
            reply: record.reply.clone(),
            label: record.label,
            source: record.source,
        })
        .collect())
}

/// Import `comment<TAB>reply` lines, all sharing one label.
pub fn import_pairs_tsv(
    path: impl AsRef<Path>,
    label: u8,
    source: Source,
) -> Result<Vec<RawPair>, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::open(path)
        .map_err(|source| DataError::Io { path: display.clone(), source })?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DataError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let (comment, reply) = line.split_once('\t').ok_or_else(|| DataError::Parse {
            path: display.clone(),
            line: line_no,
            msg: "expected comment<TAB>reply".to_string(),
        })?;
        pairs.push(RawPair {
            comment: comment.to_string(),
            reply: reply.to_string(),
            label,
            source,
        });
    }
    Ok(pairs)
}

fn parse_label_field(field: &str) -> Option<u8> {
    match field.trim().to_ascii_uppercase().as_str() {
        "SARCASM" | "SARCASTIC" | "1" => Some(1),
        "NOT_SARCASM" | "NOT_SARCASTIC" | "0" => Some(0),
        _ => None,
    }
}

/// Import the shared-task CSV layout: header `context,response,label`.
/// A context cell starting with `[` is parsed as a JSON array of utterances,
/// each paired independently with the response; otherwise it is a single
/// context utterance.
pub fn import_workshop_csv(
    path: impl AsRef<Path>,
    source: Source,
) -> Result<Vec<RawPair>, DataError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|source| DataError::Csv { path: display.clone(), source })?;

    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv { path: display.clone(), source })?
        .clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| {
            DataError::Parse {
                path: display.clone(),
                line: 1,
                msg: format!("missing column {name:?}"),
            }
        })
    };
    let context_col = col("context")?;
    let response_col = col("response")?;
    let label_col = col("label")?;

    let mut pairs = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line_no = i + 2; // header is line 1
        let row = row.map_err(|source| DataError::Csv { path: display.clone(), source })?;
        let context_field = row.get(context_col).unwrap_or("");
        let response = row.get(response_col).unwrap_or("").to_string();
        let label_field = row.get(label_col).unwrap_or("");
        let label = parse_label_field(label_field).ok_or_else(|| DataError::Value {
            path: display.clone(),
            line: line_no,
            msg: format!("unrecognized label {label_field:?}"),
        })?;

        let contexts: Vec<String> = if context_field.trim_start().starts_with('[') {
            serde_json::from_str(context_field).map_err(|e| DataError::Parse {
                path: display.clone(),
                line: line_no,
                msg: format!("context is not a JSON array of strings: {e}"),
            })?
        } else {
            vec![context_field.to_string()]
        };
        let record = MultiContextRecord { contexts, reply: response, label, source };
        pairs.extend(explode_multi_context(&record)?);
    }
    Ok(pairs)
}
