//! Model assembly: configuration, the full parameter set, and the forward
//! pass from a tokenized pair to a sigmoid prediction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{bi_isca, AttentionMaps, AttentionOptions};
use crate::embed::{EmbeddingConfig, EmbeddingTable};
use crate::encoder::{bilstm_encode, BiLstmParams, LstmNodes};
use crate::graph::{Graph, NodeId};
use crate::head::{classify, CnnBlockNodes, CnnBlockParams, HeadNodes, HeadParams};
use crate::tensor::Param;
use crate::textprep::{TokenizedPair, PAD};
use crate::NumericError;

/// All model dimensions and switches.
///
/// `d` is shared by the embeddings and both LSTM directions; the attention
/// dot products force them to agree. `dense_width` defaults to `4*d*k`, the
/// full-size head, but desk-scale runs usually shrink it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Padded token count per sentence.
    pub n: usize,
    /// Embedding and hidden dimension.
    pub d: usize,
    /// Filters per convolution layer.
    pub k: usize,
    /// Kernel heights of the two convolution layers.
    pub kernel_heights: (usize, usize),
    /// Hidden width of the dense layer.
    pub dense_width: usize,
    /// Negative-side slope of every LeakyReLU.
    pub leaky_slope: f64,
    /// Normalize attention scores with a softmax (off = raw scores).
    pub softmax_attention: bool,
    /// Zero attention scores at PAD positions.
    pub mask_pad_attention: bool,
    /// Character n-gram bounds for the subword embedding.
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Hash bucket rows in the embedding table.
    pub bucket_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let (d, k) = (30, 64);
        ModelConfig {
            n: 20,
            d,
            k,
            kernel_heights: (2, 2),
            dense_width: 4 * d * k,
            leaky_slope: 0.3,
            softmax_attention: false,
            mask_pad_attention: false,
            ngram_min: 3,
            ngram_max: 5,
            bucket_count: 1 << 16,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for gradient checking and fast tests.
    pub fn toy() -> Self {
        ModelConfig {
            n: 6,
            d: 8,
            k: 4,
            dense_width: 32,
            bucket_count: 32,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), NumericError> {
        let fail = |msg: String| Err(NumericError::Contract { op: "model_config", msg });
        if self.d == 0 || self.k == 0 || self.dense_width == 0 || self.bucket_count == 0 {
            return fail("d, k, dense_width, bucket_count must be positive".to_string());
        }
        if self.kernel_heights.0 == 0 || self.kernel_heights.1 == 0 {
            return fail("kernel heights must be positive".to_string());
        }
        let min_n = self.kernel_heights.0 + self.kernel_heights.1 - 1;
        if self.n < min_n {
            return fail(format!(
                "n = {} is too short for kernel heights {:?}; need at least {min_n}",
                self.n, self.kernel_heights
            ));
        }
        if !(0.0 < self.leaky_slope && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope must be in (0,1), got {}", self.leaky_slope));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return fail(format!(
                "invalid n-gram bounds {}..{}",
                self.ngram_min, self.ngram_max
            ));
        }
        Ok(())
    }

    /// Flattened length of one CNN block's output.
    pub fn flat_len(&self) -> usize {
        (self.n + 2 - self.kernel_heights.0 - self.kernel_heights.1) * self.k
    }

    /// Input width of the dense layer: four concatenated blocks.
    pub fn dense_input_len(&self) -> usize {
        4 * self.flat_len()
    }

    pub fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            dim: self.d,
            n_min: self.ngram_min,
            n_max: self.ngram_max,
            bucket_count: self.bucket_count,
        }
    }
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    pub embedding: EmbeddingTable,
    pub comment_encoder: BiLstmParams,
    pub reply_encoder: BiLstmParams,
    pub cnn: [CnnBlockParams; 4],
    pub head: HeadParams,
}

/// Graph-bound handles for one forward pass.
pub struct ModelNodes {
    pub comment_fwd: LstmNodes,
    pub comment_bwd: LstmNodes,
    pub reply_fwd: LstmNodes,
    pub reply_bwd: LstmNodes,
    pub cnn: [CnnBlockNodes; 4],
    pub head: HeadNodes,
}

/// Prediction plus the attention score nodes, for export and inspection.
pub struct PairForward {
    pub prediction: NodeId,
    pub maps: AttentionMaps,
}

/// Evaluated prediction and raw attention scores for one pair.
#[derive(Debug, Clone)]
pub struct PairPrediction {
    pub prediction: f64,
    pub reply_on_comment_fwd: Vec<f64>,
    pub reply_on_comment_bwd: Vec<f64>,
    pub comment_on_reply_fwd: Vec<f64>,
    pub comment_on_reply_bwd: Vec<f64>,
}

impl ModelParams {
    /// Seeded initialization of every parameter group.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NumericError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = EmbeddingTable::init(config.embedding_config(), &mut rng);
        let comment_encoder = BiLstmParams::init(config.d, &mut rng);
        let reply_encoder = BiLstmParams::init(config.d, &mut rng);
        let cnn = std::array::from_fn(|_| {
            CnnBlockParams::init(config.d, config.k, config.kernel_heights, &mut rng)
        });
        let head = HeadParams::init(config.dense_input_len(), config.dense_width, &mut rng);
        Ok(ModelParams { config, embedding, comment_encoder, reply_encoder, cnn, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Stable name -> parameter listing; the order fixes the optimizer state
    /// layout and the serialized file layout.
    pub fn named_params(&self) -> Vec<(String, Param)> {
        let mut out = vec![("embedding.buckets".to_string(), self.embedding.buckets().clone())];
        out.extend(self.comment_encoder.named_params("encoder.comment"));
        out.extend(self.reply_encoder.named_params("encoder.reply"));
        for (i, block) in self.cnn.iter().enumerate() {
            out.extend(block.named_params(&format!("cnn.{i}")));
        }
        out.extend(self.head.named_params("head"));
        out
    }

    /// Parameters the L2 penalty applies to: the dense feed-forward weights
    /// only. Convolution kernels, LSTM weights, and biases are exempt.
    pub fn l2_param_names(&self) -> Vec<String> {
        vec!["head.dense.w".to_string(), "head.out.w".to_string()]
    }

    pub fn zero_grads(&self) {
        for (_, p) in self.named_params() {
            p.borrow_mut().zero_grad();
        }
    }

    /// Total scalar count across all parameters.
    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.numel()).sum()
    }

    pub fn bind(&self, g: &mut Graph) -> ModelNodes {
        ModelNodes {
            comment_fwd: self.comment_encoder.fwd.bind(g),
            comment_bwd: self.comment_encoder.bwd.bind(g),
            reply_fwd: self.reply_encoder.fwd.bind(g),
            reply_bwd: self.reply_encoder.bwd.bind(g),
            cnn: std::array::from_fn(|i| self.cnn[i].bind(g)),
            head: self.head.bind(g),
        }
    }

    /// Stack the word vectors of a padded sentence into an `[n,d]` node.
    fn sentence_matrix(&self, g: &mut Graph, tokens: &[String]) -> Result<NodeId, NumericError> {
        let rows: Vec<NodeId> = tokens
            .iter()
            .map(|t| self.embedding.word_node(g, t))
            .collect::<Result<_, _>>()?;
        g.stack_rows(&rows)
    }

    fn attention_options(&self, pair: &TokenizedPair) -> AttentionOptions {
        let mask = |tokens: &[String]| tokens.iter().map(|t| t == PAD).collect();
        AttentionOptions {
            softmax_scores: self.config.softmax_attention,
            comment_pad_mask: self.config.mask_pad_attention.then(|| mask(&pair.comment_tokens)),
            reply_pad_mask: self.config.mask_pad_attention.then(|| mask(&pair.reply_tokens)),
        }
    }

    /// Forward pass for one pair on an existing graph with bound nodes.
    pub fn forward_on(
        &self,
        g: &mut Graph,
        nodes: &ModelNodes,
        pair: &TokenizedPair,
    ) -> Result<PairForward, NumericError> {
        if pair.comment_tokens.len() != self.config.n || pair.reply_tokens.len() != self.config.n {
            return Err(NumericError::Contract {
                op: "forward",
                msg: format!(
                    "pair has {}/{} tokens, model wants n = {}",
                    pair.comment_tokens.len(),
                    pair.reply_tokens.len(),
                    self.config.n
                ),
            });
        }
        let comment_matrix = self.sentence_matrix(g, &pair.comment_tokens)?;
        let reply_matrix = self.sentence_matrix(g, &pair.reply_tokens)?;
        let comment = bilstm_encode(g, comment_matrix, &nodes.comment_fwd, &nodes.comment_bwd)?;
        let reply = bilstm_encode(g, reply_matrix, &nodes.reply_fwd, &nodes.reply_bwd)?;
        let opts = self.attention_options(pair);
        let (maps, states) = bi_isca(g, &comment, &reply, &opts)?;
        let prediction =
            classify(g, &states, &nodes.cnn, &nodes.head, self.config.leaky_slope)?;
        Ok(PairForward { prediction, maps })
    }

    /// Forward pass for one pair on a fresh graph.
    pub fn forward(&self, g: &mut Graph, pair: &TokenizedPair) -> Result<PairForward, NumericError> {
        let nodes = self.bind(g);
        self.forward_on(g, &nodes, pair)
    }

    /// Prediction only, throwing the graph away.
    pub fn predict(&self, pair: &TokenizedPair) -> Result<f64, NumericError> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, pair)?;
        Ok(g.scalar_value(out.prediction))
    }

    /// Prediction plus the four raw score vectors, for inspection/export.
    pub fn predict_with_attention(
        &self,
        pair: &TokenizedPair,
    ) -> Result<PairPrediction, NumericError> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, pair)?;
        Ok(PairPrediction {
            prediction: g.scalar_value(out.prediction),
            reply_on_comment_fwd: g.value(out.maps.reply_on_comment_fwd).to_vec(),
            reply_on_comment_bwd: g.value(out.maps.reply_on_comment_bwd).to_vec(),
            comment_on_reply_fwd: g.value(out.maps.comment_on_reply_fwd).to_vec(),
            comment_on_reply_bwd: g.value(out.maps.comment_on_reply_bwd).to_vec(),
        })
    }

    /// Predictions for a whole dataset, one small graph per pair.
    pub fn predict_batch(&self, pairs: &[TokenizedPair]) -> Result<Vec<f64>, NumericError> {
        pairs.iter().map(|p| self.predict(p)).collect()
    }

    /// Build the mean-BCE loss of a batch on one graph. Returns the graph,
    /// the loss node, and the predictions.
    pub fn batch_loss_graph(
        &self,
        pairs: &[TokenizedPair],
    ) -> Result<(Graph, NodeId, Vec<f64>), NumericError> {
        if pairs.is_empty() {
            return Err(NumericError::Contract {
                op: "batch_loss_graph",
                msg: "empty batch".to_string(),
            });
        }
        let mut g = Graph::new();
        let nodes = self.bind(&mut g);
        let mut preds = Vec::with_capacity(pairs.len());
        let mut labels = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let out = self.forward_on(&mut g, &nodes, pair)?;
            preds.push(out.prediction);
            labels.push(f64::from(pair.label));
        }
        let pred_vec = g.concat(&preds)?;
        let loss = g.bce_mean(pred_vec, &labels)?;
        let values = g.value(pred_vec).to_vec();
        Ok((g, loss, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::SlangDictionary;

    fn toy_pair(label: u8) -> TokenizedPair {
        let dict = SlangDictionary::empty();
        TokenizedPair::from_texts("what a great day", "sure it is", label, &dict, 6)
    }

    #[test]
    fn config_validation_catches_bad_dims() {
        let mut c = ModelConfig::toy();
        c.n = 2;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.leaky_slope = 1.5;
        assert!(c.validate().is_err());
        assert!(ModelConfig::toy().validate().is_ok());
    }

    #[test]
    fn flat_and_dense_lengths() {
        let c = ModelConfig::default();
        assert_eq!(c.flat_len(), 18 * 64);
        assert_eq!(c.dense_input_len(), 4 * 18 * 64);
        assert_eq!(c.dense_width, 4 * 30 * 64);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ModelParams::init(ModelConfig::toy(), 7).unwrap();
        let b = ModelParams::init(ModelConfig::toy(), 7).unwrap();
        for ((name_a, pa), (name_b, pb)) in a.named_params().iter().zip(b.named_params().iter()) {
            assert_eq!(name_a, name_b);
            assert_eq!(pa.borrow().values(), pb.borrow().values(), "{name_a}");
        }
        let c = ModelParams::init(ModelConfig::toy(), 8).unwrap();
        let pa = &a.named_params()[1].1;
        let pc = &c.named_params()[1].1;
        assert_ne!(pa.borrow().values(), pc.borrow().values());
    }

    #[test]
    fn named_params_cover_all_groups() {
        let m = ModelParams::init(ModelConfig::toy(), 1).unwrap();
        let names: Vec<String> = m.named_params().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"embedding.buckets".to_string()));
        assert!(names.contains(&"encoder.comment.fwd.input_gate.w".to_string()));
        assert!(names.contains(&"encoder.reply.bwd.output_gate.b".to_string()));
        assert!(names.contains(&"cnn.3.layer2.kernels".to_string()));
        assert!(names.contains(&"head.out.w".to_string()));
        // 1 embedding + 2 encoders * 2 directions * 4 gates * 3 tensors + 4 blocks * 4 + head * 4
        assert_eq!(names.len(), 1 + 48 + 16 + 4);
    }

    #[test]
    fn all_parameters_are_distinct_tensors() {
        // Two encoders and four CNN blocks share nothing.
        let m = ModelParams::init(ModelConfig::toy(), 1).unwrap();
        let named = m.named_params();
        let mut seen = std::collections::HashSet::new();
        for (name, p) in &named {
            assert!(seen.insert(p.borrow().values().as_ptr() as usize), "{name} is shared");
        }
    }

    #[test]
    fn forward_is_deterministic_and_in_range() {
        let m = ModelParams::init(ModelConfig::toy(), 3).unwrap();
        let pair = toy_pair(1);
        let y1 = m.predict(&pair).unwrap();
        let y2 = m.predict(&pair).unwrap();
        assert_eq!(y1, y2);
        assert!(0.0 < y1 && y1 < 1.0);
    }

    #[test]
    fn forward_rejects_wrong_length_pair() {
        let m = ModelParams::init(ModelConfig::toy(), 3).unwrap();
        let dict = SlangDictionary::empty();
        let pair = TokenizedPair::from_texts("a b", "c d", 0, &dict, 4);
        assert!(m.predict(&pair).is_err());
    }

    #[test]
    fn batch_loss_matches_per_pair_bce() {
        let m = ModelParams::init(ModelConfig::toy(), 3).unwrap();
        let pairs = vec![toy_pair(1), toy_pair(0)];
        let (g, loss, preds) = m.batch_loss_graph(&pairs).unwrap();
        let want: f64 = -(preds[0].ln() + (1.0 - preds[1]).ln()) / 2.0;
        assert!((g.scalar_value(loss) - want).abs() < 1e-12);
    }

    #[test]
    fn gradients_flow_to_every_group_after_backward() {
        let m = ModelParams::init(ModelConfig::toy(), 3).unwrap();
        let pairs = vec![toy_pair(1), toy_pair(0)];
        m.zero_grads();
        let (mut g, loss, _) = m.batch_loss_graph(&pairs).unwrap();
        g.backward(loss).unwrap();
        for (name, p) in m.named_params() {
            let norm: f64 = p.borrow().grad().unwrap().iter().map(|v| v * v).sum();
            assert!(norm > 0.0, "no gradient reached {name}");
        }
    }
}
