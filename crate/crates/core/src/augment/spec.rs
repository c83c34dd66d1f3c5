use serde::{Deserialize, Serialize};

use super::{AugmentError, MAX_STRETCH_RATE, MIN_STRETCH_RATE};

/// Temporal offset distribution: `min + Beta(α, β)·(max − min)` seconds.
/// The default (α=8, β=2 over [0, 150 ms]) has mean 120 ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaShiftSpec {
    pub enabled: bool,
    pub alpha: f64,
    pub beta: f64,
    pub min_offset: f64,
    pub max_offset: f64,
}

impl Default for BetaShiftSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha: 8.0,
            beta: 2.0,
            min_offset: 0.0,
            max_offset: 0.150,
        }
    }
}

impl BetaShiftSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let ok = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.alpha > 0.0
            && self.beta > 0.0
            && self.min_offset.is_finite()
            && self.max_offset.is_finite()
            && self.min_offset >= 0.0
            && self.max_offset >= self.min_offset;
        if ok {
            Ok(())
        } else {
            Err(AugmentError::InvalidSpec(format!(
                "time_shift needs alpha > 0, beta > 0 and 0 <= min_offset <= max_offset (got {self:?})"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundNoiseSpec {
    pub enabled: bool,
    pub snr_db: [f64; 2],
    /// Directory of WAV files; a synthetic corpus is used when unset.
    pub corpus: Option<String>,
}

impl Default for BackgroundNoiseSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            snr_db: [0.0, 20.0],
            corpus: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColoredNoiseSpec {
    pub enabled: bool,
    pub snr_db: [f64; 2],
    /// Spectral decay exponent: 0 white, 1 pink, 2 brown.
    pub decay: [f64; 2],
}

impl Default for ColoredNoiseSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            snr_db: [0.0, 20.0],
            decay: [0.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReverbSpec {
    pub enabled: bool,
    /// Directory of impulse-response WAV files; synthetic when unset.
    pub corpus: Option<String>,
}

impl Default for ReverbSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            corpus: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchShiftSpec {
    pub enabled: bool,
    pub semitones: [f64; 2],
}

impl Default for PitchShiftSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            semitones: [-2.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolaritySpec {
    pub enabled: bool,
    pub probability: f64,
}

impl Default for PolaritySpec {
    fn default() -> Self {
        Self {
            enabled: true,
            probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TanhSpec {
    pub enabled: bool,
    pub drive: [f64; 2],
}

impl Default for TanhSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            drive: [0.5, 5.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeStretchSpec {
    pub enabled: bool,
    pub rate: [f64; 2],
}

impl Default for TimeStretchSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            rate: [0.9, 1.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecAugmentSpec {
    pub enabled: bool,
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
    pub n_time_masks: usize,
    pub max_time_width: usize,
}

impl Default for SpecAugmentSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            n_freq_masks: 2,
            max_freq_width: 10,
            n_time_masks: 2,
            max_time_width: 40,
        }
    }
}

/// Which augmentations build a replica, and their parameter ranges.
/// Enabled waveform effects fire independently with `probability`, except
/// the time shift (always applied when enabled) and polarity inversion
/// (its own probability).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSpec {
    pub probability: f64,
    pub time_shift: BetaShiftSpec,
    pub time_stretch: TimeStretchSpec,
    pub pitch_shift: PitchShiftSpec,
    pub reverb: ReverbSpec,
    pub background_noise: BackgroundNoiseSpec,
    pub colored_noise: ColoredNoiseSpec,
    pub polarity_inversion: PolaritySpec,
    pub tanh_distortion: TanhSpec,
    pub spec_augment: SpecAugmentSpec,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            probability: 0.5,
            time_shift: BetaShiftSpec::default(),
            time_stretch: TimeStretchSpec::default(),
            pitch_shift: PitchShiftSpec::default(),
            reverb: ReverbSpec::default(),
            background_noise: BackgroundNoiseSpec::default(),
            colored_noise: ColoredNoiseSpec::default(),
            polarity_inversion: PolaritySpec::default(),
            tanh_distortion: TanhSpec::default(),
            spec_augment: SpecAugmentSpec::default(),
        }
    }
}

fn range(name: &str, r: [f64; 2], min: f64, max: f64) -> Result<(), AugmentError> {
    if r.iter().all(|v| v.is_finite()) && r[0] <= r[1] && r[0] >= min && r[1] <= max {
        Ok(())
    } else {
        Err(AugmentError::InvalidSpec(format!(
            "{name} range {r:?} must be finite, ordered and within [{min}, {max}]"
        )))
    }
}

fn probability(name: &str, p: f64) -> Result<(), AugmentError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(AugmentError::InvalidSpec(format!("{name} = {p} must lie in [0, 1]")))
    }
}

impl AugmentationSpec {
    /// Every augmentation off: replicas equal their originals.
    pub fn disabled() -> Self {
        let mut s = Self::default();
        s.time_shift.enabled = false;
        s.time_stretch.enabled = false;
        s.pitch_shift.enabled = false;
        s.reverb.enabled = false;
        s.background_noise.enabled = false;
        s.colored_noise.enabled = false;
        s.polarity_inversion.enabled = false;
        s.tanh_distortion.enabled = false;
        s.spec_augment.enabled = false;
        s
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        probability("probability", self.probability)?;
        self.time_shift.validate()?;
        range("time_stretch.rate", self.time_stretch.rate, MIN_STRETCH_RATE, MAX_STRETCH_RATE)?;
        range("pitch_shift.semitones", self.pitch_shift.semitones, -12.0, 12.0)?;
        range("background_noise.snr_db", self.background_noise.snr_db, -30.0, 100.0)?;
        range("colored_noise.snr_db", self.colored_noise.snr_db, -30.0, 100.0)?;
        range("colored_noise.decay", self.colored_noise.decay, 0.0, 4.0)?;
        probability("polarity_inversion.probability", self.polarity_inversion.probability)?;
        range("tanh_distortion.drive", self.tanh_distortion.drive, 1e-6, 100.0)?;
        Ok(())
    }

    /// Longest shift the spec can draw, in seconds.
    pub fn max_shift(&self) -> f64 {
        if self.time_shift.enabled {
            self.time_shift.max_offset
        } else {
            0.0
        }
    }
}
