//! Classification head: four independent two-layer CNN blocks, flatten,
//! concat, dense layer, sigmoid output, and the binary cross-entropy loss.
//!
//! Each contextualized sequence `[n,d]` gets its own block (no parameter
//! sharing). A block is two valid convolutions over the token axis with `k`
//! filters of height `h` each, LeakyReLU after both, flattened row-major to
//! `(n-h1-h2+2)*k` features. The four flat vectors concatenate into the
//! dense layer, which feeds a single sigmoid unit.

use rand::Rng;

use crate::attention::ContextualizedStates;
use crate::graph::{Graph, NodeId};
use crate::tensor::{Param, Tensor};
use crate::NumericError;

/// Parameters of one two-layer convolution block.
///
/// Layer 1 maps `[n,d] -> [n-h1+1, k]`, layer 2 maps on to `[n-h1-h2+2, k]`.
/// Kernels are stored as `[k, h*channels]` matrices.
#[derive(Debug, Clone)]
pub struct CnnBlockParams {
    pub kernels1: Param,
    pub bias1: Param,
    pub kernels2: Param,
    pub bias2: Param,
    pub heights: (usize, usize),
    pub filters: usize,
}

impl CnnBlockParams {
    pub fn init(d: usize, k: usize, heights: (usize, usize), rng: &mut impl Rng) -> Self {
        let mat = |rows: usize, cols: usize, rng: &mut dyn rand::RngCore| {
            let bound = 1.0 / (cols as f64).sqrt();
            let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
            Param::new(Tensor::new(vec![rows, cols], values).expect("consistent kernel shape"))
        };
        CnnBlockParams {
            kernels1: mat(k, heights.0 * d, rng),
            bias1: Param::zeros(vec![k]),
            kernels2: mat(k, heights.1 * k, rng),
            bias2: Param::zeros(vec![k]),
            heights,
            filters: k,
        }
    }

    pub fn zeros(d: usize, k: usize, heights: (usize, usize)) -> Self {
        CnnBlockParams {
            kernels1: Param::zeros(vec![k, heights.0 * d]),
            bias1: Param::zeros(vec![k]),
            kernels2: Param::zeros(vec![k, heights.1 * k]),
            bias2: Param::zeros(vec![k]),
            heights,
            filters: k,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> CnnBlockNodes {
        CnnBlockNodes {
            kernels1: g.param(&self.kernels1),
            bias1: g.param(&self.bias1),
            kernels2: g.param(&self.kernels2),
            bias2: g.param(&self.bias2),
            heights: self.heights,
        }
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Param)> {
        vec![
            (format!("{prefix}.layer1.kernels"), self.kernels1.clone()),
            (format!("{prefix}.layer1.bias"), self.bias1.clone()),
            (format!("{prefix}.layer2.kernels"), self.kernels2.clone()),
            (format!("{prefix}.layer2.bias"), self.bias2.clone()),
        ]
    }

    /// Flattened output length for an `n`-token input.
    pub fn flat_len(&self, n: usize) -> usize {
        (n + 2 - self.heights.0 - self.heights.1) * self.filters
    }

    /// Smallest `n` the block accepts.
    pub fn min_tokens(&self) -> usize {
        self.heights.0 + self.heights.1 - 1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CnnBlockNodes {
    pub kernels1: NodeId,
    pub bias1: NodeId,
    pub kernels2: NodeId,
    pub bias2: NodeId,
    pub heights: (usize, usize),
}

/// Dense layer plus the single sigmoid output unit.
#[derive(Debug, Clone)]
pub struct HeadParams {
    pub dense_w: Param,
    pub dense_b: Param,
    pub out_w: Param,
    pub out_b: Param,
    pub width: usize,
}

impl HeadParams {
    pub fn init(input_len: usize, width: usize, rng: &mut impl Rng) -> Self {
        let mat = |rows: usize, cols: usize, rng: &mut dyn rand::RngCore| {
            let bound = 1.0 / (cols as f64).sqrt();
            let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
            Param::new(Tensor::new(vec![rows, cols], values).expect("consistent dense shape"))
        };
        let bound = 1.0 / (width as f64).sqrt();
        let out_values: Vec<f64> = (0..width).map(|_| rng.gen_range(-bound..bound)).collect();
        HeadParams {
            dense_w: mat(width, input_len, rng),
            dense_b: Param::zeros(vec![width]),
            out_w: Param::new(Tensor::vector(out_values)),
            out_b: Param::zeros(vec![1]),
            width,
        }
    }

    pub fn zeros(input_len: usize, width: usize) -> Self {
        HeadParams {
            dense_w: Param::zeros(vec![width, input_len]),
            dense_b: Param::zeros(vec![width]),
            out_w: Param::zeros(vec![width]),
            out_b: Param::zeros(vec![1]),
            width,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> HeadNodes {
        HeadNodes {
            dense_w: g.param(&self.dense_w),
            dense_b: g.param(&self.dense_b),
            out_w: g.param(&self.out_w),
            out_b: g.param(&self.out_b),
        }
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Param)> {
        vec![
            (format!("{prefix}.dense.w"), self.dense_w.clone()),
            (format!("{prefix}.dense.b"), self.dense_b.clone()),
            (format!("{prefix}.out.w"), self.out_w.clone()),
            (format!("{prefix}.out.b"), self.out_b.clone()),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    pub dense_w: NodeId,
    pub dense_b: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

/// Two convolutions with LeakyReLU, flattened row-major.
pub fn cnn_block(
    g: &mut Graph,
    seq: NodeId,
    p: &CnnBlockNodes,
    slope: f64,
) -> Result<NodeId, NumericError> {
    let n = g.shape(seq)[0];
    let min = p.heights.0 + p.heights.1 - 1;
    if n < min {
        return Err(NumericError::Contract {
            op: "cnn_block",
            msg: format!("sequence of {n} tokens is too short; need at least {min}"),
        });
    }
    let c1 = g.conv1d_valid(seq, p.kernels1, p.bias1, p.heights.0)?;
    let a1 = g.leaky_relu(c1, slope)?;
    let c2 = g.conv1d_valid(a1, p.kernels2, p.bias2, p.heights.1)?;
    let a2 = g.leaky_relu(c2, slope)?;
    g.flatten(a2)
}

/// Full head over the four contextualized sequences. Returns the sigmoid
/// prediction as a `[1]` node.
///
/// Block order is fixed: comment-on-reply forward, comment-on-reply
/// backward, reply-on-comment forward, reply-on-comment backward.
pub fn classify(
    g: &mut Graph,
    states: &ContextualizedStates,
    cnn: &[CnnBlockNodes; 4],
    head: &HeadNodes,
    slope: f64,
) -> Result<NodeId, NumericError> {
    let f1 = cnn_block(g, states.comment_on_reply_fwd, &cnn[0], slope)?;
    let f2 = cnn_block(g, states.comment_on_reply_bwd, &cnn[1], slope)?;
    let f3 = cnn_block(g, states.reply_on_comment_fwd, &cnn[2], slope)?;
    let f4 = cnn_block(g, states.reply_on_comment_bwd, &cnn[3], slope)?;
    let p = g.concat(&[f1, f2, f3, f4])?;

    let pre = g.matvec(head.dense_w, p)?;
    let pre = g.add(pre, head.dense_b)?;
    let hidden = g.leaky_relu(pre, slope)?;

    let logit = g.dot(head.out_w, hidden)?;
    let logit = g.add(logit, head.out_b)?;
    Ok(g.sigmoid(logit))
}

/// Mean binary cross-entropy of predictions in `(0,1)` against 0/1 labels.
pub fn bce_loss(g: &mut Graph, preds: NodeId, labels: &[f64]) -> Result<NodeId, NumericError> {
    g.bce_mean(preds, labels)
}
