//! Character-n-gram subword embeddings.
//!
//! A word is wrapped in `<`/`>` boundary markers and decomposed into all
//! contiguous character n-grams of lengths `n_min..=n_max`, plus the wrapped
//! whole word. Each gram hashes (FNV-1a, 64-bit) into one of `bucket_count`
//! rows of a trainable matrix; the word vector is the mean of those rows.
//! The mean keeps vector scale independent of word length. Any spelling gets
//! a vector, so there is no out-of-vocabulary case, and a pretrained
//! word-vector text file can overlay exact-match words.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::graph::{Graph, NodeId};
use crate::tensor::{Param, Tensor};
use crate::textprep::PAD;
use crate::NumericError;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("char_ngrams: {0}")]
    Contract(String),
    #[error("{path} line {line}: {msg}")]
    BadLine { path: String, line: usize, msg: String },
    #[error("{path}: file has {file_dim} dimensions, table is configured for {expected}")]
    DimensionMismatch { path: String, file_dim: usize, expected: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// All contiguous n-grams of the `<word>` wrapped form for lengths
/// `n_min..=n_max`, plus the wrapped whole word when it is not already one
/// of them. A wrapped form shorter than `n_min` yields only the whole word.
pub fn char_ngrams(word: &str, n_min: usize, n_max: usize) -> Result<Vec<String>, EmbedError> {
    if word.is_empty() {
        return Err(EmbedError::Contract("word must be non-empty".to_string()));
    }
    if word == PAD {
        return Err(EmbedError::Contract(format!("{PAD:?} has no n-grams")));
    }
    if n_min == 0 || n_min > n_max {
        return Err(EmbedError::Contract(format!("invalid n-gram bounds {n_min}..{n_max}")));
    }
    let wrapped: Vec<char> =
        std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
    let mut grams = Vec::new();
    for len in n_min..=n_max {
        for window in wrapped.windows(len) {
            grams.push(window.iter().collect());
        }
    }
    if !(n_min..=n_max).contains(&wrapped.len()) {
        grams.push(wrapped.iter().collect());
    }
    Ok(grams)
}

/// FNV-1a over the UTF-8 bytes of a gram. Fixed so that bucket assignments
/// are reproducible across platforms and implementations.
pub fn fnv1a64(text: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// N-gram bounds and bucket sizing for an [`EmbeddingTable`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub bucket_count: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig { dim: 30, n_min: 3, n_max: 5, bucket_count: 1 << 16 }
    }
}

/// Subword embedding table, optionally overlaid with pretrained vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    config: EmbeddingConfig,
    buckets: Param,
    trainable: bool,
    pretrained: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Fresh table with buckets drawn uniformly from `(-1/sqrt(dim),
    /// 1/sqrt(dim))`, the same scale as the recurrent weights. Averaging
    /// over a word's grams shrinks vectors further, so a smaller bound
    /// leaves the first forward pass with activations too close to zero.
    pub fn init(config: EmbeddingConfig, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (config.dim as f64).sqrt();
        let values: Vec<f64> = (0..config.bucket_count * config.dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let buckets = Param::new(
            Tensor::new(vec![config.bucket_count, config.dim], values)
                .expect("bucket shape is consistent by construction"),
        );
        EmbeddingTable { config, buckets, trainable: true, pretrained: BTreeMap::new() }
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    /// The bucket matrix parameter (`bucket_count x dim`).
    pub fn buckets(&self) -> &Param {
        &self.buckets
    }

    fn bucket_indices(&self, word: &str) -> Vec<usize> {
        char_ngrams(word, self.config.n_min, self.config.n_max)
            .expect("callers filter PAD and empty words")
            .iter()
            .map(|gram| (fnv1a64(gram) % self.config.bucket_count as u64) as usize)
            .collect()
    }

    /// Eager lookup: PAD is all zeros, pretrained words pass through, and
    /// everything else is the mean of its gram buckets.
    pub fn word_vector(&self, word: &str) -> Vec<f64> {
        if word == PAD {
            return vec![0.0; self.config.dim];
        }
        if let Some(v) = self.pretrained.get(word) {
            return v.clone();
        }
        let indices = self.bucket_indices(word);
        let table = self.buckets.borrow();
        let values = table.values();
        let d = self.config.dim;
        let mut out = vec![0.0; d];
        for &row in &indices {
            for j in 0..d {
                out[j] += values[row * d + j];
            }
        }
        let inv = 1.0 / indices.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }

    /// Graph lookup. Differentiable into the bucket matrix only when the
    /// table is trainable and the word is composed from buckets.
    pub fn word_node(&self, g: &mut Graph, word: &str) -> Result<NodeId, NumericError> {
        if word == PAD || self.pretrained.contains_key(word) || !self.trainable {
            return Ok(g.constant_vector(self.word_vector(word)));
        }
        let table = g.param(&self.buckets);
        g.gather_mean_rows(table, &self.bucket_indices(word))
    }

    /// Load a word-vector text file: one `word v1 .. vd` record per line,
    /// with an optional `count dim` header. Exact-match words will use the
    /// file vectors; everything else still composes from buckets. Loading
    /// freezes the table.
    pub fn load_pretrained(&mut self, path: impl AsRef<Path>) -> Result<usize, EmbedError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = std::fs::File::open(path)
            .map_err(|source| EmbedError::Io { path: display.clone(), source })?;
        let mut loaded = 0usize;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| EmbedError::Io { path: display.clone(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-empty line has a first field");
            let rest: Vec<&str> = fields.collect();
            // Header form: two integers on the first line.
            if line_no == 1 && rest.len() == 1 {
                let both_ints = word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok();
                if both_ints {
                    let header_dim: usize = rest[0].parse().expect("checked above");
                    if header_dim != self.config.dim {
                        return Err(EmbedError::DimensionMismatch {
                            path: display,
                            file_dim: header_dim,
                            expected: self.config.dim,
                        });
                    }
                    continue;
                }
            }
            if rest.len() != self.config.dim {
                if !rest.is_empty() && rest.iter().all(|f| f.parse::<f64>().is_ok()) {
                    return Err(EmbedError::DimensionMismatch {
                        path: display,
                        file_dim: rest.len(),
                        expected: self.config.dim,
                    });
                }
                return Err(EmbedError::BadLine {
                    path: display,
                    line: line_no,
                    msg: format!("expected a word and {} floats", self.config.dim),
                });
            }
            let mut vector = Vec::with_capacity(self.config.dim);
            for field in &rest {
                let value: f64 = field.parse().map_err(|_| EmbedError::BadLine {
                    path: display.clone(),
                    line: line_no,
                    msg: format!("{field:?} is not a number"),
                })?;
                vector.push(value);
            }
            self.pretrained.insert(word.to_string(), vector);
            loaded += 1;
        }
        self.trainable = false;
        Ok(loaded)
    }

    pub fn pretrained_len(&self) -> usize {
        self.pretrained.len()
    }
}
