//! Contrastive training: positive pairs from augmentation, NT-Xent loss,
//! Adam updates and checkpointing.

mod config;
mod loss;
mod run;
mod step;

pub use config::{schedule_step, ScheduleMode, TrainConfig};
pub use loss::{nt_xent, nt_xent_node, nt_xent_with_grad, NtXent, NORM_TOLERANCE};
pub use run::{load_tracks, train, EpochSummary, StepRecord, TrainOptions, TrainSetup, TrainSummary, Trainer};
pub use step::train_step;

use thiserror::Error;

use crate::augment::AugmentError;
use crate::autodiff::AutodiffError;
use crate::dsp::DspError;
use crate::encoder::EncoderError;
use crate::manifest::ManifestError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step} (batch items {items:?}, max |activation| {max_abs_activation})")]
    NonFiniteLoss {
        step: u64,
        items: Vec<String>,
        max_abs_activation: f64,
    },
    #[error("dataset has {found} usable tracks, need at least {required}")]
    NotEnoughTracks { found: usize, required: usize },
    #[error("checkpoint cannot resume this run: {0}")]
    ResumeMismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
