use std::path::Path;

use rand::Rng;

use super::{colored_noise, synthetic_impulse_response, AugmentError, AugmentationSpec};
use crate::dsp::{resample, wav, AudioBuffer, DspError};
use crate::rng::{derive_indexed, rng_from_seed};

/// A named collection of clips (background noises or impulse responses).
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    clips: Vec<AudioBuffer>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, clips: Vec<AudioBuffer>) -> Result<Self, AugmentError> {
        let name = name.into();
        if clips.is_empty() || clips.iter().any(AudioBuffer::is_empty) {
            return Err(AugmentError::EmptyCorpus(name));
        }
        Ok(Self { name, clips })
    }

    /// Loads every `.wav` file in `dir` in sorted name order, resampled to
    /// `sample_rate`.
    pub fn load_dir(dir: impl AsRef<Path>, sample_rate: u32) -> Result<Self, AugmentError> {
        let dir = dir.as_ref();
        let io = |source| {
            AugmentError::Dsp(DspError::Io {
                path: dir.display().to_string(),
                source,
            })
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        paths.sort();
        let clips = paths
            .iter()
            .map(|p| Ok(resample(&wav::read(p)?, sample_rate)?))
            .collect::<Result<Vec<_>, AugmentError>>()?;
        Self::new(dir.display().to_string(), clips)
    }

    /// Broadband noises with varied spectral tilt and slow amplitude
    /// modulation, standing in for a recorded noise corpus.
    pub fn synthetic_noise(n: usize, seconds: f64, sample_rate: u32, seed: u64) -> Result<Self, AugmentError> {
        let len = (seconds * f64::from(sample_rate)).round() as usize;
        let clips = (0..n)
            .map(|i| {
                let mut rng = rng_from_seed(derive_indexed(seed, "synthetic-noise", i as u64));
                let decay = rng.random_range(0.0..2.0);
                let base = colored_noise(len, decay, sample_rate, &mut rng)?;
                let rate = rng.random_range(0.2..3.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let s = base
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        let env = 0.6 + 0.4 * (phase + rate * std::f64::consts::TAU * t as f64 / f64::from(sample_rate)).sin();
                        (f64::from(v) * env) as f32
                    })
                    .collect();
                Ok(AudioBuffer::new(s, sample_rate)?)
            })
            .collect::<Result<Vec<_>, AugmentError>>()?;
        Self::new("synthetic-noise", clips)
    }

    /// Exponentially decaying room responses with RT60 in [0.1, 0.8] s.
    pub fn synthetic_impulse_responses(n: usize, sample_rate: u32, seed: u64) -> Result<Self, AugmentError> {
        let clips = (0..n)
            .map(|i| {
                let mut rng = rng_from_seed(derive_indexed(seed, "synthetic-ir", i as u64));
                let rt60 = rng.random_range(0.1..0.8);
                synthetic_impulse_response(rt60, sample_rate, &mut rng)
            })
            .collect::<Result<Vec<_>, AugmentError>>()?;
        Self::new("synthetic-ir", clips)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn clips(&self) -> &[AudioBuffer] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &AudioBuffer {
        &self.clips[rng.random_range(0..self.clips.len())]
    }
}

/// Noise and impulse-response corpora for one augmentation spec.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpora {
    pub noise: Corpus,
    pub impulse_responses: Corpus,
}

impl Corpora {
    /// Loads the directories named in `spec`, falling back to synthetic
    /// corpora derived from `seed` where none is configured.
    pub fn for_spec(spec: &AugmentationSpec, sample_rate: u32, seed: u64) -> Result<Self, AugmentError> {
        let noise = match &spec.background_noise.corpus {
            Some(dir) => Corpus::load_dir(dir, sample_rate)?,
            None => Corpus::synthetic_noise(8, 5.0, sample_rate, seed)?,
        };
        let impulse_responses = match &spec.reverb.corpus {
            Some(dir) => Corpus::load_dir(dir, sample_rate)?,
            None => Corpus::synthetic_impulse_responses(8, sample_rate, seed)?,
        };
        Ok(Self {
            noise,
            impulse_responses,
        })
    }

    pub fn synthetic(sample_rate: u32, seed: u64) -> Result<Self, AugmentError> {
        Self::for_spec(&AugmentationSpec::default(), sample_rate, seed)
    }
}
