//! Small dense kernels for query initialization from candidate instances and
//! for language-conditioned candidate scoring.
//!
//! Everything runs on `f64` row-major tensors with explicit weights; nothing
//! here trains.

mod attention;
mod encoder;
mod retrieval;
mod tensor;
mod weights;

use thiserror::Error;

pub use attention::{
    aggregate_queries, attention, attention_block, attention_block_traced, initial_queries,
    layer_norm, softmax_rows, AttentionWeights, BlockTrace, BlockWeights, FeedForward, LayerNorm,
    QUERY_INIT_STD,
};
pub use encoder::{
    encode_instance, inject_trajectory, instance_tokens, project_and_pool, FeatureMap, LevelSpec,
};
pub use retrieval::{
    score_candidates, score_candidates_with, selection_registry, Classifier, OneHotRule, Retrieval,
    SelectionRule, ThresholdRule,
};
pub use tensor::{load_tensor_file, tensor_map_to_json, Tensor, TensorMap};
pub use weights::{LevelWeights, ModelConfig, ModelWeights};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite values after {sublayer}")]
    NonFinite { sublayer: String },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("missing weight {0:?}")]
    MissingWeight(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

impl NnError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NnError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
