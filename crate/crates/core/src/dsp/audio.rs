use super::DspError;

/// Mono audio at a declared sample rate. Samples are finite and lie in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidSampleRate(sample_rate));
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(DspError::InvalidSample { index, value });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a buffer from arbitrary finite samples, peak-normalizing when
    /// the peak exceeds 1. Non-finite samples are rejected.
    pub fn from_unnormalized(mut samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DspError::InvalidSample { index, value });
        }
        let peak = samples.iter().fold(0f32, |m, v| m.max(v.abs()));
        if peak > 1.0 {
            samples.iter_mut().for_each(|v| *v /= peak);
            // guard against 1 + ulp after division
            samples.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        }
        Self::new(samples, sample_rate)
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Copies `len` samples starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<AudioBuffer, DspError> {
        if start + len > self.samples.len() {
            return Err(DspError::TooShort {
                found: self.samples.len(),
                required: start + len,
            });
        }
        Ok(Self {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate: self.sample_rate,
        })
    }

    /// Mean power (mean of squared samples).
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>()
            / self.samples.len() as f64
    }
}
