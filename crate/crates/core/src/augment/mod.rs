//! Waveform and spectrogram augmentations used to build contrastive
//! positive pairs and distorted evaluation queries.

mod corpus;
mod effects;
mod noise;
pub(crate) mod replica;
mod reverb;
mod shift;
mod spec;
mod specaug;
mod vocoder;

pub use corpus::{Corpora, Corpus};
pub use effects::{polarity_invert, soft_clip, tanh_distort};
pub use noise::{add_noise_at_snr, colored_noise, loop_to_length};
pub use replica::{augment_audio, make_replica, Replica};
pub use reverb::{apply_reverb, synthetic_impulse_response};
pub use shift::{apply_time_shift, sample_shift, ShiftDirection};
pub use spec::{
    AugmentationSpec, BackgroundNoiseSpec, BetaShiftSpec, ColoredNoiseSpec, PitchShiftSpec, PolaritySpec, ReverbSpec,
    SpecAugmentSpec, TanhSpec, TimeStretchSpec,
};
pub use specaug::{apply_masks, spec_augment, Mask, MaskAxis};
pub use vocoder::{pitch_shift, time_stretch, MAX_STRETCH_RATE, MIN_STRETCH_RATE};

use thiserror::Error;

use crate::dsp::DspError;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation spec: {0}")]
    InvalidSpec(String),
    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("insufficient context for shift: need samples [{start}, {end}), context has {available}")]
    InsufficientContext { start: i64, end: i64, available: usize },
    #[error("{0} signal is silent")]
    Silent(&'static str),
    #[error("impulse response is empty")]
    EmptyImpulseResponse,
    #[error("corpus {0} has no clips")]
    EmptyCorpus(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Scales `x` so its peak is at most 1.
pub(crate) fn peak_normalize(mut x: Vec<f64>) -> Vec<f32> {
    let peak = x.iter().fold(0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
    x.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect()
}

pub(crate) fn check_range(what: &'static str, value: f64, min: f64, max: f64) -> Result<(), AugmentError> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(AugmentError::OutOfRange { what, value, min, max })
    }
}
