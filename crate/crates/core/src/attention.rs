//! Bidirectional inter-sentence contextual attention.
//!
//! Each sentence's directional final cell states act as whole-sentence
//! summaries. Dotting a cell state against every hidden state of the *other*
//! sentence yields a raw score per token — four score vectors in total
//! (comment fwd/bwd cells over reply hiddens, reply fwd/bwd cells over
//! comment hiddens). The scores are used as-is: no softmax, no temperature,
//! no scaling. Multiplying each hidden row by its score produces the four
//! contextualized sequences the classifier consumes.

use crate::encoder::EncoderState;
use crate::graph::{Graph, NodeId};
use crate::NumericError;

/// The four raw score vectors, each of length `n`.
///
/// Values are plain dot products with no simplex constraint; they can be
/// negative and do not sum to one.
#[derive(Debug, Clone, Copy)]
pub struct AttentionMaps {
    /// Comment forward cell against reply hiddens.
    pub reply_on_comment_fwd: NodeId,
    /// Comment backward cell against reply hiddens.
    pub reply_on_comment_bwd: NodeId,
    /// Reply forward cell against comment hiddens.
    pub comment_on_reply_fwd: NodeId,
    /// Reply backward cell against comment hiddens.
    pub comment_on_reply_bwd: NodeId,
}

/// The four score-rescaled hidden sequences, each `[n,d]`.
#[derive(Debug, Clone, Copy)]
pub struct ContextualizedStates {
    pub reply_on_comment_fwd: NodeId,
    pub reply_on_comment_bwd: NodeId,
    pub comment_on_reply_fwd: NodeId,
    pub comment_on_reply_bwd: NodeId,
}

/// Options for score post-processing. Both default to off; the raw-score
/// path is the reference behavior.
#[derive(Debug, Clone, Default)]
pub struct AttentionOptions {
    /// Normalize each score vector with a softmax before rescaling.
    pub softmax_scores: bool,
    /// Zero the scores at PAD positions of the scored sentence. `true`
    /// entries mark PAD slots.
    pub comment_pad_mask: Option<Vec<bool>>,
    pub reply_pad_mask: Option<Vec<bool>>,
}

/// Raw attention scores: `score[i] = dot(cell, hidden_seq[i])`.
pub fn attention_scores(
    g: &mut Graph,
    cell: NodeId,
    hidden_seq: NodeId,
) -> Result<NodeId, NumericError> {
    g.matvec(hidden_seq, cell)
}

/// Rescale row `i` of `hidden_seq` by `scores[i]`.
pub fn contextualize(
    g: &mut Graph,
    scores: NodeId,
    hidden_seq: NodeId,
) -> Result<NodeId, NumericError> {
    g.scale_rows(hidden_seq, scores)
}

fn post_process(
    g: &mut Graph,
    scores: NodeId,
    opts: &AttentionOptions,
    pad_mask: Option<&[bool]>,
) -> Result<NodeId, NumericError> {
    let mut out = scores;
    if let Some(mask) = pad_mask {
        let keep: Vec<f64> = mask.iter().map(|&is_pad| if is_pad { 0.0 } else { 1.0 }).collect();
        let mask_node = g.constant_vector(keep);
        out = g.mul(out, mask_node)?;
    }
    if opts.softmax_scores {
        out = g.softmax(out)?;
    }
    Ok(out)
}

/// Full bidirectional inter-sentence attention over an encoded pair.
pub fn bi_isca(
    g: &mut Graph,
    comment: &EncoderState,
    reply: &EncoderState,
    opts: &AttentionOptions,
) -> Result<(AttentionMaps, ContextualizedStates), NumericError> {
    if comment.n != reply.n || comment.d != reply.d {
        return Err(NumericError::DimensionMismatch {
            op: "bi_isca",
            lhs: vec![comment.n, comment.d],
            rhs: vec![reply.n, reply.d],
        });
    }

    let reply_mask = opts.reply_pad_mask.as_deref();
    let comment_mask = opts.comment_pad_mask.as_deref();

    // Comment cells score the reply's tokens.
    let a_rc_fwd = attention_scores(g, comment.fwd_final_cell, reply.hidden_seq)?;
    let a_rc_fwd = post_process(g, a_rc_fwd, opts, reply_mask)?;
    let a_rc_bwd = attention_scores(g, comment.bwd_final_cell, reply.hidden_seq)?;
    let a_rc_bwd = post_process(g, a_rc_bwd, opts, reply_mask)?;

    // Reply cells score the comment's tokens.
    let a_cr_fwd = attention_scores(g, reply.fwd_final_cell, comment.hidden_seq)?;
    let a_cr_fwd = post_process(g, a_cr_fwd, opts, comment_mask)?;
    let a_cr_bwd = attention_scores(g, reply.bwd_final_cell, comment.hidden_seq)?;
    let a_cr_bwd = post_process(g, a_cr_bwd, opts, comment_mask)?;

    let maps = AttentionMaps {
        reply_on_comment_fwd: a_rc_fwd,
        reply_on_comment_bwd: a_rc_bwd,
        comment_on_reply_fwd: a_cr_fwd,
        comment_on_reply_bwd: a_cr_bwd,
    };

    let states = ContextualizedStates {
        reply_on_comment_fwd: contextualize(g, a_rc_fwd, reply.hidden_seq)?,
        reply_on_comment_bwd: contextualize(g, a_rc_bwd, reply.hidden_seq)?,
        comment_on_reply_fwd: contextualize(g, a_cr_fwd, comment.hidden_seq)?,
        comment_on_reply_bwd: contextualize(g, a_cr_bwd, comment.hidden_seq)?,
    };

    Ok((maps, states))
}
