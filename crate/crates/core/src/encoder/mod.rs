//! Conformer fingerprint encoder: log-mel frames → input projection →
//! conformer blocks → mean pooling over frames → output projection → ℓ2
//! normalization.

mod checkpoint;
mod config;
pub(crate) mod embedding;
mod model;

pub use checkpoint::{ModelCheckpoint, TrainingMeta, CHECKPOINT_VERSION};
pub use config::ConformerConfig;
pub use embedding::Embedding;
pub use model::{mean_pool, Model};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::binio::FormatError;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input has {found} mel bands, model expects {expected}")]
    MelMismatch { expected: usize, found: usize },
    #[error("input has {found} frames, model supports at most {max}")]
    TooManyFrames { max: usize, found: usize },
    #[error("batch items have different shapes: {0}")]
    HeterogeneousBatch(String),
    #[error("embedding is not unit norm (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("checkpoint does not match its config: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
