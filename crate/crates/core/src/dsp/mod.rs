//! Audio front-end: ingestion, resampling, STFT, mel filterbank, stabilized
//! log-mel features and fixed-length segmentation.

mod audio;
pub(crate) mod mel;
pub(crate) mod resample;
mod segment;
pub(crate) mod stft;
pub mod wav;

pub use audio::AudioBuffer;
pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, Featurizer, MelFilterbank, MelSpectrogram, MEL_VERSION};
pub use resample::resample;
pub use segment::{segment, segment_count, Segment};
pub use stft::{hann_window, stft, Stft};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::FormatError;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("empty audio buffer")]
    Empty,
    #[error("invalid sample at index {index}: {value} (samples must be finite and within [-1, 1])")]
    InvalidSample { index: usize, value: f32 },
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("sample rate mismatch: expected {expected} Hz, got {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("audio too short: {found} samples, need at least {required}")]
    TooShort { found: usize, required: usize },
    #[error("expected exactly {expected} samples, got {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("invalid spectral config: {0}")]
    InvalidConfig(String),
    #[error("mel filter {index} has empty support (n_mels too large for fft_len)")]
    EmptyFilter { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wav: {0}")]
    Wav(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Front-end parameters. Defaults follow the small model: 16 kHz, 3 s
/// segments, 1024-point FFT, hop 128, 80 mel bands, HTK mel scale over
/// [0, sample_rate/2] and a log stabilizer of 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub sample_rate: u32,
    pub segment_seconds: f64,
    pub fft_len: usize,
    pub hop_len: usize,
    pub n_mels: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
    pub log_epsilon: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            segment_seconds: 3.0,
            fft_len: 1024,
            hop_len: 128,
            n_mels: 80,
            mel_fmin: 0.0,
            mel_fmax: 8_000.0,
            log_epsilon: 1e-8,
        }
    }
}

impl SpectralConfig {
    pub fn with_n_mels(mut self, n_mels: usize) -> Self {
        self.n_mels = n_mels;
        self
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::InvalidConfig(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !self.fft_len.is_power_of_two() || self.fft_len < 2 {
            return bad(format!("fft_len {} is not a power of two", self.fft_len));
        }
        if self.hop_len == 0 || self.hop_len > self.fft_len {
            return bad(format!("hop_len {} must be in 1..={}", self.hop_len, self.fft_len));
        }
        if self.n_mels == 0 || self.n_mels >= self.n_bins() {
            return bad(format!("n_mels {} must be in 1..{}", self.n_mels, self.n_bins()));
        }
        let exact = self.segment_seconds * f64::from(self.sample_rate);
        if !(self.segment_seconds > 0.0) || (exact - exact.round()).abs() > 1e-6 {
            return bad(format!(
                "segment_seconds {} is not a whole number of samples at {} Hz",
                self.segment_seconds, self.sample_rate
            ));
        }
        if self.segment_samples() < self.fft_len {
            return bad("segment shorter than one FFT frame".into());
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(self.mel_fmin >= 0.0 && self.mel_fmin < self.mel_fmax && self.mel_fmax <= nyquist) {
            return bad(format!(
                "mel range [{}, {}] must satisfy 0 <= fmin < fmax <= {nyquist}",
                self.mel_fmin, self.mel_fmax
            ));
        }
        if !(self.log_epsilon > 0.0 && self.log_epsilon.is_finite()) {
            return bad("log_epsilon must be positive and finite".into());
        }
        Ok(())
    }

    pub fn segment_samples(&self) -> usize {
        (self.segment_seconds * f64::from(self.sample_rate)).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Frames per segment; frames lie fully inside the segment (no padding).
    pub fn n_frames(&self) -> usize {
        (self.segment_samples() - self.fft_len) / self.hop_len + 1
    }

    pub fn seconds_to_samples(&self, seconds: f64) -> usize {
        (seconds * f64::from(self.sample_rate)).round() as usize
    }
}
