//! Adam optimization with an L2 penalty on the dense head, mini-batching,
//! validation-based early stopping, and evaluation.
//!
//! Mini-batches are processed in fixed-size chunks of at most 32 pairs per
//! graph. Gradient accumulation makes the chunked sweep exactly equal to one
//! big graph over the whole batch, while keeping memory bounded.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvalMetrics;
use crate::model::ModelParams;
use crate::tensor::Param;
use crate::textprep::TokenizedPair;
use crate::NumericError;

/// Pairs per forward/backward graph inside one mini-batch.
const CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("NaN gradient in parameter {param}")]
    NanGradient { param: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("train: {0}")]
    Contract(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    /// Consecutive epochs without a validation-loss improvement before
    /// stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 2000,
            l2_lambda: 1e-2,
            patience: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate <= 0.0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Contract(
                "learning_rate, epochs, batch_size must be positive".to_string(),
            ));
        }
        if self.l2_lambda < 0.0 {
            return Err(TrainError::Contract("l2_lambda must be non-negative".to_string()));
        }
        if self.patience == 0 || self.patience > self.epochs {
            return Err(TrainError::Contract(format!(
                "patience must be in 1..=epochs, got {} with {} epochs",
                self.patience, self.epochs
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::Contract("betas must be in [0,1)".to_string()));
        }
        Ok(())
    }
}

/// First/second moment estimates, laid out parallel to the named parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
}

impl AdamState {
    pub fn new(params: &[(String, Param)]) -> Self {
        let m = params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect::<Vec<_>>();
        AdamState { v: m.clone(), m, step: 0 }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

/// One Adam update from the gradients currently stored in the parameters.
///
/// The L2 term adds `lambda * theta` to the gradient of parameters listed in
/// `l2_params` before the moment updates. Gradients are left untouched; the
/// caller zeroes them before the next accumulation.
pub fn adam_step(
    params: &[(String, Param)],
    state: &mut AdamState,
    config: &TrainConfig,
    l2_params: &[String],
) -> Result<(), TrainError> {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);

    for (idx, (name, param)) in params.iter().enumerate() {
        let apply_l2 = config.l2_lambda > 0.0 && l2_params.iter().any(|n| n == name);
        let mut tensor = param.borrow_mut();
        let grad = tensor.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tensor.numel()]);
        let values = tensor.values_mut();
        for i in 0..values.len() {
            let mut g = grad[i];
            if g.is_nan() {
                return Err(TrainError::NanGradient { param: name.clone() });
            }
            if apply_l2 {
                g += config.l2_lambda * values[i];
            }
            let m = &mut state.m[idx][i];
            let v = &mut state.v[idx][i];
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            values[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

/// Validation-loss early stopping: any strict improvement resets the
/// counter; `patience` consecutive non-improving epochs stop the run.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, stale_epochs: 0 }
    }

    /// Record one epoch's validation loss. Returns true when training
    /// should stop. `improved()` tells whether this epoch set a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale_epochs = 0;
            false
        } else {
            self.stale_epochs += 1;
            self.stale_epochs >= self.patience
        }
    }

    pub fn improved(&self) -> bool {
        self.stale_epochs == 0
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Post-update loss and metrics for one epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metrics: EvalMetrics,
}

/// What happened over a whole training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch that actually ran (1-based).
    pub stopped_epoch: usize,
    /// Epoch with the lowest validation loss; its weights are restored.
    pub best_epoch: usize,
    /// Training examples consumed across all epochs.
    pub examples_seen: usize,
}

impl TrainHistory {
    /// Line-delimited JSON, one record per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&serde_json::to_string(record).expect("epoch records serialize"));
            out.push('\n');
        }
        out
    }
}

/// One forward sweep over a dataset in chunks: mean BCE plus every
/// prediction.
pub fn dataset_forward(
    model: &ModelParams,
    dataset: &[TokenizedPair],
) -> Result<(f64, Vec<f64>), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Contract("dataset must be non-empty".to_string()));
    }
    let mut total = 0.0;
    let mut preds = Vec::with_capacity(dataset.len());
    for chunk in dataset.chunks(CHUNK) {
        let (g, loss, chunk_preds) = model.batch_loss_graph(chunk)?;
        total += g.scalar_value(loss) * chunk.len() as f64;
        preds.extend(chunk_preds);
    }
    Ok((total / dataset.len() as f64, preds))
}

/// Mean BCE over a dataset, forward only.
pub fn dataset_loss(model: &ModelParams, dataset: &[TokenizedPair]) -> Result<f64, TrainError> {
    Ok(dataset_forward(model, dataset)?.0)
}

/// Threshold model predictions at 0.5 and tally the confusion matrix.
pub fn evaluate(model: &ModelParams, dataset: &[TokenizedPair]) -> Result<EvalMetrics, TrainError> {
    let (_, preds) = dataset_forward(model, dataset)?;
    let labels: Vec<u8> = dataset.iter().map(|p| p.label).collect();
    Ok(EvalMetrics::from_predictions(&preds, &labels)?)
}

/// Accumulate gradients for one mini-batch and return its mean BCE.
///
/// Each chunk's loss is scaled by `chunk_len / batch_len` before backward,
/// so the accumulated gradients equal those of the whole-batch mean loss.
fn batch_backward(
    model: &ModelParams,
    batch: &[TokenizedPair],
) -> Result<f64, TrainError> {
    model.zero_grads();
    let batch_len = batch.len() as f64;
    let mut batch_loss = 0.0;
    for chunk in batch.chunks(CHUNK) {
        let (mut g, chunk_loss, _) = model.batch_loss_graph(chunk)?;
        let weight = chunk.len() as f64 / batch_len;
        let scaled = g.scale(chunk_loss, weight);
        g.backward(scaled)?;
        batch_loss += g.scalar_value(chunk_loss) * weight;
    }
    Ok(batch_loss)
}

fn snapshot(params: &[(String, Param)]) -> Vec<Vec<f64>> {
    params.iter().map(|(_, p)| p.borrow().values().to_vec()).collect()
}

fn restore(params: &[(String, Param)], saved: &[Vec<f64>]) {
    for ((_, p), values) in params.iter().zip(saved) {
        p.borrow_mut().values_mut().copy_from_slice(values);
    }
}

/// Full training loop: per-epoch seeded shuffle, chunked Adam steps over
/// mini-batches (the last partial batch is kept), validation loss and
/// metrics after every epoch, early stopping on stalled validation loss,
/// and restoration of the best epoch's weights.
pub fn train(
    model: &mut ModelParams,
    train_set: &[TokenizedPair],
    val_set: &[TokenizedPair],
    config: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    train_with_progress(model, train_set, val_set, config, |_| {})
}

/// [`train`] with a per-epoch observer, called right after each epoch's
/// record is complete.
pub fn train_with_progress(
    model: &mut ModelParams,
    train_set: &[TokenizedPair],
    val_set: &[TokenizedPair],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory, TrainError> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Contract("train and validation sets must be non-empty".to_string()));
    }

    let params = model.named_params();
    let l2_params = model.l2_param_names();
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut history = TrainHistory {
        epochs: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        examples_seen: 0,
    };
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_weights = snapshot(&params);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (batch_idx, batch_indices) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<TokenizedPair> =
                batch_indices.iter().map(|&i| train_set[i].clone()).collect();
            let batch_loss = batch_backward(model, &batch)?;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            adam_step(&params, &mut adam, config, &l2_params)?;
            epoch_loss += batch_loss * batch.len() as f64;
            history.examples_seen += batch.len();
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let (val_loss, val_preds) = dataset_forward(model, val_set)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let val_labels: Vec<u8> = val_set.iter().map(|p| p.label).collect();
        let val_metrics = EvalMetrics::from_predictions(&val_preds, &val_labels)?;
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, val_metrics });
        history.stopped_epoch = epoch;
        on_epoch(history.epochs.last().expect("record just pushed"));

        let stop = stopper.observe(epoch, val_loss);
        if stopper.improved() {
            history.best_epoch = epoch;
            best_weights = snapshot(&params);
        }
        if stop {
            break;
        }
    }

    restore(&params, &best_weights);
    Ok(history)
}
