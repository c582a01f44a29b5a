//! Framework-free neural network primitives on [`TokenMatrix`] values.
//!
//! Every layer acts on tokens (rows) with weights shared across tokens, so all
//! of them are equivariant under token permutations.

mod attention;
mod config;
mod layers;
pub mod param_file;
mod params;
mod tensor;

pub use attention::{
    cross_attention, multi_head_self_attention, AttentionOutput, AttentionParams, TransformerLayer,
};
pub use config::{pruned_count, NetConfig};
pub use layers::{
    col_softmax, context_norm, layer_norm, mlp_forward, relu, row_softmax, ContextNormBlock,
    FeedForward, Mlp, CONTEXT_NORM_EPS, LAYER_NORM_EPS,
};
pub use param_file::{read_params, write_params, ParamFileError};
pub use params::{
    init_params, param_specs, Linear, ParamKind, ParamScope, ParamSpec, ParamStore,
    ParamStoreBuilder, Tensor,
};
pub use tensor::TokenMatrix;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid network config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("layer {layer}: {detail}")]
    ShapeMismatch { layer: String, detail: String },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("duplicate parameter {0}")]
    DuplicateName(String),
    #[error("context normalization needs at least 2 tokens, got {tokens}")]
    DegenerateNormalization { tokens: usize },
}
