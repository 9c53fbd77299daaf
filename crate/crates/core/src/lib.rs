//! Sarcasm detection over comment/reply pairs with bidirectional
//! inter-sentence contextual attention.
//!
//! The pipeline: raw text is lowercased, punctuation-split, slang-expanded,
//! and padded ([`textprep`]); words become subword character-n-gram
//! embeddings ([`embed`]); each sentence is encoded by its own BiLSTM
//! ([`encoder`]); the final cell state of each sentence scores every token
//! of the other sentence, and those raw scores rescale the hidden states
//! ([`attention`]); four CNN blocks plus a dense sigmoid head turn the
//! rescaled sequences into a prediction ([`head`]); Adam with early stopping
//! trains the whole thing ([`training`]).
//!
//! Everything runs on a small `f64` reverse-mode graph ([`graph`]) that is
//! verified against central finite differences ([`gradcheck`]).

pub mod attention;
pub mod data;
pub mod embed;
pub mod encoder;
pub mod gradcheck;
pub mod graph;
pub mod head;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod textprep;
pub mod training;
pub mod weights;

use thiserror::Error;

/// Faults raised by the numeric core: shape disagreements, violated
/// preconditions, and NaN/Inf detection.
#[derive(Debug, Error)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    DimensionMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
}

pub use graph::{Graph, NodeId};
pub use model::{ModelConfig, ModelParams};
pub use tensor::{Param, Tensor};
