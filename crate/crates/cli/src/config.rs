//! Run configuration: a JSON file plus flag overrides, validated before any
//! work happens. Unknown keys are rejected.
//!
//! Length and batch defaults follow the mode: reddit pads to n = 20 and
//! batches 2000 pairs, twitter pads to n = 40 and batches 500.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bi_isca::data::{BalanceMode, Source};
use bi_isca::model::ModelConfig;
use bi_isca::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d: usize,
    pub k: usize,
    pub kernel_heights: (usize, usize),
    /// Defaults to the full-size head, 4*d*k.
    pub dense_width: Option<usize>,
    pub leaky_slope: f64,
    pub softmax_attention: bool,
    pub mask_pad_attention: bool,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub bucket_count: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            d: 30,
            k: 64,
            kernel_heights: (2, 2),
            dense_width: None,
            leaky_slope: 0.3,
            softmax_attention: false,
            mask_pad_attention: false,
            ngram_min: 3,
            ngram_max: 5,
            bucket_count: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            l2_lambda: t.l2_lambda,
            patience: t.patience,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
        }
    }
}

/// Everything a run needs. The `seed` governs model init, shuffling, and
/// splitting alike.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Option<Source>,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub balance: Option<BalanceMode>,
    /// Padded sentence length; defaults by mode.
    pub n: Option<usize>,
    /// Mini-batch size; defaults by mode.
    pub batch_size: Option<usize>,
    pub slang_file: Option<PathBuf>,
    pub pretrained_embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub train: TrainSection,
}

/// Flag-level overrides applied on top of the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Dataset in the canonical JSONL layout.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// reddit or twitter; fixes n and batch-size defaults.
    #[arg(long)]
    pub mode: Option<Source>,
    /// balanced or imbalanced class ratio.
    #[arg(long)]
    pub balance: Option<BalanceMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Padded sentence length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Embedding and hidden dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Convolution filters per layer.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dense_width: Option<usize>,
    #[arg(long)]
    pub bucket_count: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2_lambda: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Word-vector text file overlaid on the subword table.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Slang dictionary file (token<TAB>expansion per line).
    #[arg(long)]
    pub slang_file: Option<PathBuf>,
    /// Output directory for weights, history, and metrics.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// A fully resolved configuration: every default applied, every field
/// validated.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: RunConfig,
    pub balance: BalanceMode,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(v) = &o.dataset {
            self.dataset = Some(v.clone());
        }
        if let Some(v) = o.mode {
            self.mode = Some(v);
        }
        if let Some(v) = o.balance {
            self.balance = Some(v);
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.n {
            self.n = Some(v);
        }
        if let Some(v) = o.d {
            self.model.d = v;
        }
        if let Some(v) = o.k {
            self.model.k = v;
        }
        if let Some(v) = o.dense_width {
            self.model.dense_width = Some(v);
        }
        if let Some(v) = o.bucket_count {
            self.model.bucket_count = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.batch_size = Some(v);
        }
        if let Some(v) = o.l2_lambda {
            self.train.l2_lambda = v;
        }
        if let Some(v) = o.patience {
            self.train.patience = v;
        }
        if let Some(v) = &o.pretrained {
            self.pretrained_embeddings = Some(v.clone());
        }
        if let Some(v) = &o.slang_file {
            self.slang_file = Some(v.clone());
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = Some(v.clone());
        }
    }

    /// Fill mode-dependent defaults and validate everything.
    pub fn resolve(mut self) -> Result<ResolvedConfig, CliError> {
        let mode = self.mode.unwrap_or(Source::Reddit);
        let balance = self.balance.unwrap_or(BalanceMode::Balanced);
        let n = self.n.unwrap_or_else(|| mode.default_n());
        let batch_size = self.batch_size.unwrap_or_else(|| mode.default_batch_size());

        let model = ModelConfig {
            n,
            d: self.model.d,
            k: self.model.k,
            kernel_heights: self.model.kernel_heights,
            dense_width: self.model.dense_width.unwrap_or(4 * self.model.d * self.model.k),
            leaky_slope: self.model.leaky_slope,
            softmax_attention: self.model.softmax_attention,
            mask_pad_attention: self.model.mask_pad_attention,
            ngram_min: self.model.ngram_min,
            ngram_max: self.model.ngram_max,
            bucket_count: self.model.bucket_count,
        };
        model.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let train = TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            batch_size,
            l2_lambda: self.train.l2_lambda,
            patience: self.train.patience,
            seed: self.seed,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            adam_eps: self.train.adam_eps,
        };
        train.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        if let Some(path) = &self.slang_file {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "slang file {} does not exist",
                    path.display()
                )));
            }
        }
        if let Some(path) = &self.pretrained_embeddings {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "pretrained embeddings {} do not exist",
                    path.display()
                )));
            }
        }

        // Record the resolved values back into the snapshot.
        self.mode = Some(mode);
        self.balance = Some(balance);
        self.n = Some(n);
        self.batch_size = Some(batch_size);
        self.model.dense_width = Some(model.dense_width);

        Ok(ResolvedConfig { raw: self, balance, seed: train.seed, model, train })
    }
}

impl ResolvedConfig {
    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.raw
            .dataset
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset configured (set dataset or --dataset)".into()))
    }

    /// The snapshot written next to run outputs; reloading it reproduces the
    /// run byte for byte.
    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("config serializes")
    }
}
