use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::augment::{MAX_STRETCH_RATE, MIN_STRETCH_RATE};
use crate::dsp::{AudioBuffer, DspError};

/// Temporal shifts are given as a percentage of this many seconds.
pub const SHIFT_REFERENCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    None,
    TimeShift,
    BackgroundNoise,
    ColoredNoise,
    Reverb,
    TimeStretch,
}

impl DistortionKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::TimeShift => "time_shift",
            Self::BackgroundNoise => "background_noise",
            Self::ColoredNoise => "colored_noise",
            Self::Reverb => "reverb",
            Self::TimeStretch => "time_stretch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::None,
            Self::TimeShift,
            Self::BackgroundNoise,
            Self::ColoredNoise,
            Self::Reverb,
            Self::TimeStretch,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// One query distortion. `parameter` is the shift in percent of
/// [`SHIFT_REFERENCE`], the SNR in dB for the noise kinds, or the playback
/// rate for time stretch; `none` and `reverb` take no parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionCase {
    pub kind: DistortionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
}

impl DistortionCase {
    pub const NONE: Self = Self {
        kind: DistortionKind::None,
        parameter: None,
    };

    pub fn time_shift(percent: f64) -> Self {
        Self::with(DistortionKind::TimeShift, percent)
    }

    pub fn background_noise(snr_db: f64) -> Self {
        Self::with(DistortionKind::BackgroundNoise, snr_db)
    }

    pub fn colored_noise(snr_db: f64) -> Self {
        Self::with(DistortionKind::ColoredNoise, snr_db)
    }

    pub fn reverb() -> Self {
        Self {
            kind: DistortionKind::Reverb,
            parameter: None,
        }
    }

    pub fn time_stretch(rate: f64) -> Self {
        Self::with(DistortionKind::TimeStretch, rate)
    }

    fn with(kind: DistortionKind, p: f64) -> Self {
        Self { kind, parameter: Some(p) }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidProtocol(format!("{self}: {m}")));
        let p = self.parameter;
        match (self.kind, p) {
            (DistortionKind::None | DistortionKind::Reverb, None) => Ok(()),
            (DistortionKind::None | DistortionKind::Reverb, Some(_)) => bad("takes no parameter".into()),
            (_, None) => bad("parameter required".into()),
            (_, Some(v)) if !v.is_finite() => bad("parameter must be finite".into()),
            (DistortionKind::TimeShift, Some(v)) if !(0.0..=100.0).contains(&v) => {
                bad("shift must be within [0, 100] percent".into())
            }
            (DistortionKind::BackgroundNoise | DistortionKind::ColoredNoise, Some(v)) if !(-20.0..=60.0).contains(&v) => {
                bad("snr_db must be within [-20, 60]".into())
            }
            (DistortionKind::TimeStretch, Some(v)) if !(MIN_STRETCH_RATE..=MAX_STRETCH_RATE).contains(&v) => bad(
                format!("rate must be within [{MIN_STRETCH_RATE}, {MAX_STRETCH_RATE}]"),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DistortionCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parameter {
            Some(p) => write!(f, "{}={p}", self.kind.name()),
            None => f.write_str(self.kind.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingTrackPolicy {
    #[default]
    Error,
    Miss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub queries_per_track: usize,
    pub runs: usize,
    pub k_values: Vec<usize>,
    /// Distortions to sweep; the undistorted case is always evaluated first.
    pub cases: Vec<DistortionCase>,
    /// Snap excerpt starts to the fingerprint grid so a distortion-free
    /// query coincides with an indexed segment.
    pub align_to_hop: bool,
    /// Fingerprint hop of the database, in seconds. Taken from the index
    /// settings rather than the eval section of a config file.
    #[serde(skip)]
    pub hop: f64,
    pub missing_tracks: MissingTrackPolicy,
    /// Range of the spectral decay exponent drawn for colored noise.
    pub colored_decay: [f64; 2],
    /// Query excerpts, spread evenly over all queries, used as probes for
    /// the similarity-vs-shift curve.
    pub shift_probes: usize,
    pub shift_max_ms: f64,
    pub shift_step_ms: f64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            queries_per_track: 5,
            runs: 5,
            k_values: vec![1, 5],
            cases: Vec::new(),
            align_to_hop: true,
            hop: 0.3,
            missing_tracks: MissingTrackPolicy::Error,
            colored_decay: [0.0, 2.0],
            shift_probes: 4,
            shift_max_ms: 300.0,
            shift_step_ms: 10.0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidProtocol(m.to_string()));
        if self.queries_per_track == 0 || self.runs == 0 {
            return bad("queries_per_track and runs must be at least 1");
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k_values must be non-empty and positive");
        }
        if !(self.hop > 0.0 && self.hop.is_finite()) {
            return bad("hop must be positive");
        }
        let [lo, hi] = self.colored_decay;
        if !(0.0..=8.0).contains(&lo) || !(lo..=8.0).contains(&hi) {
            return bad("colored_decay must be an ordered range within [0, 8]");
        }
        if !(self.shift_step_ms > 0.0 && self.shift_max_ms >= 0.0 && self.shift_max_ms.is_finite()) {
            return bad("shift_step_ms must be positive and shift_max_ms non-negative");
        }
        self.cases.iter().try_for_each(DistortionCase::validate)
    }

    /// The case list as evaluated: `none` first, duplicates removed.
    pub fn suite(&self) -> Vec<DistortionCase> {
        let mut out = vec![DistortionCase::NONE];
        for c in &self.cases {
            if !out.contains(c) {
                out.push(*c);
            }
        }
        out
    }
}

/// `n` excerpts of `segment_len` seconds with starts linearly spaced over
/// `[0, duration - segment_len]`, endpoints included; a single excerpt is
/// centered.
pub fn select_excerpts(
    track: &AudioBuffer,
    n: usize,
    segment_len: f64,
) -> Result<Vec<(f64, AudioBuffer)>, DspError> {
    let sr = f64::from(track.sample_rate());
    let len = (segment_len * sr).round() as usize;
    if n == 0 || len == 0 {
        return Err(DspError::InvalidArgument("need n >= 1 and a positive segment length".into()));
    }
    if track.len() < len {
        return Err(DspError::TooShort {
            found: track.len(),
            required: len,
        });
    }
    excerpt_starts(track.len(), len, n, sr)
        .into_iter()
        .map(|t| {
            let start = ((t * sr).round() as usize).min(track.len() - len);
            Ok((t, track.slice(start, len)?))
        })
        .collect()
}

pub(crate) fn excerpt_starts(track_len: usize, segment_len: usize, n: usize, sr: f64) -> Vec<f64> {
    let span = track_len.saturating_sub(segment_len) as f64 / sr;
    (0..n)
        .map(|i| {
            if n == 1 {
                span / 2.0
            } else {
                span * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}
