//! Deterministic preprocessing from raw text to padded token sequences.
//!
//! The pipeline lowercases, splits every Unicode punctuation character into
//! its own token, splits on whitespace, expands slang abbreviations to their
//! full forms, and pads or truncates to a fixed length. Stop-words are kept:
//! fragments like "is it ?" often carry the sarcastic tone.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// Sentinel token used to fill sequences up to length `n`.
///
/// It contains punctuation on purpose: no corpus token can survive
/// tokenization with embedded `<`/`>`, so it never collides.
pub const PAD: &str = "<pad>";

#[derive(Debug, Error)]
pub enum TextPrepError {
    #[error("slang dictionary line {line}: {msg}")]
    BadDictionaryLine { line: usize, msg: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn is_punct(ch: char) -> bool {
    ch.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Lowercase, split punctuation characters into their own tokens, split on
/// whitespace. Empty input gives an empty list.
pub fn normalize_and_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punct(ch) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Exact-match mapping from a lowercase abbreviation to its full form.
#[derive(Debug, Clone, Default)]
pub struct SlangDictionary {
    entries: HashMap<String, Vec<String>>,
}

impl SlangDictionary {
    /// The curated list bundled with the crate (`assets/slang.tsv`).
    pub fn builtin() -> Self {
        // The bundled file is validated by tests, so parsing cannot fail.
        Self::parse(include_str!("../assets/slang.tsv")).expect("bundled slang list is valid")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Parse `token<TAB>expansion words`, one mapping per line. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, TextPrepError> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (token, expansion) = line.split_once('\t').ok_or_else(|| {
                TextPrepError::BadDictionaryLine {
                    line: line_no,
                    msg: "expected token<TAB>expansion".to_string(),
                }
            })?;
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(TextPrepError::BadDictionaryLine {
                    line: line_no,
                    msg: format!("key {token:?} must be a single token"),
                });
            }
            if token.chars().any(char::is_uppercase) {
                return Err(TextPrepError::BadDictionaryLine {
                    line: line_no,
                    msg: format!("key {token:?} must be lowercase"),
                });
            }
            let words: Vec<String> = expansion.split_whitespace().map(str::to_string).collect();
            if words.is_empty() {
                return Err(TextPrepError::BadDictionaryLine {
                    line: line_no,
                    msg: "empty expansion".to_string(),
                });
            }
            entries.insert(token.to_string(), words);
        }
        Ok(SlangDictionary { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TextPrepError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TextPrepError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn lookup(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replace each known abbreviation with its expansion, in place, preserving
/// order. Unknown tokens pass through untouched.
pub fn expand_slang(tokens: Vec<String>, dict: &SlangDictionary) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        match dict.lookup(&token) {
            Some(words) => out.extend(words.iter().cloned()),
            None => out.push(token),
        }
    }
    out
}

/// Pad with [`PAD`] up to `n`, or keep the first `n` tokens.
pub fn pad_or_truncate(mut tokens: Vec<String>, n: usize) -> Vec<String> {
    assert!(n >= 1, "pad_or_truncate: n must be >= 1");
    tokens.truncate(n);
    while tokens.len() < n {
        tokens.push(PAD.to_string());
    }
    tokens
}

/// The full pipeline for one sentence: tokenize, expand slang, fix length.
pub fn preprocess(text: &str, dict: &SlangDictionary, n: usize) -> Vec<String> {
    pad_or_truncate(expand_slang(normalize_and_tokenize(text), dict), n)
}

/// A comment/reply pair ready for the model: both sides exactly `n` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    pub comment_tokens: Vec<String>,
    pub reply_tokens: Vec<String>,
    pub label: u8,
}

impl TokenizedPair {
    pub fn from_texts(
        comment: &str,
        reply: &str,
        label: u8,
        dict: &SlangDictionary,
        n: usize,
    ) -> Self {
        debug_assert!(label <= 1);
        TokenizedPair {
            comment_tokens: preprocess(comment, dict, n),
            reply_tokens: preprocess(reply, dict, n),
            label,
        }
    }

    pub fn n(&self) -> usize {
        self.comment_tokens.len()
    }
}

impl fmt::Display for TokenizedPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} // {}",
            self.label,
            self.comment_tokens.join(" "),
            self.reply_tokens.join(" ")
        )
    }
}
