//! Synthetic "music" for smoke tests and the toy experiment: sequences of
//! short notes built from a few sinusoids with harmonics and a decaying
//! envelope, over a faint noise floor.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{wav, AudioBuffer, DspError};
use crate::manifest::ManifestEntry;
use crate::rng::{derive_indexed, rng_from_seed};

const PEAK: f64 = 0.8;

/// One clip of `seconds` at `sample_rate`, fully determined by `seed`.
pub fn toy_clip(seed: u64, seconds: f64, sample_rate: u32) -> AudioBuffer {
    let mut rng = rng_from_seed(seed);
    let sr = f64::from(sample_rate);
    let len = (seconds * sr).round() as usize;
    let mut x = vec![0.0f64; len];
    let mut t0 = 0.0;
    while t0 < seconds {
        let dur = rng.random_range(0.15..0.5);
        let start = (t0 * sr) as usize;
        let n = ((dur + 0.1) * sr) as usize;
        let tones = rng.random_range(1..=3);
        let decay = rng.random_range(2.0..8.0);
        for _ in 0..tones {
            let f = 150.0 * 20f64.powf(rng.random_range(0.0..1.0));
            let amp = rng.random_range(0.3..1.0);
            let phase = rng.random_range(0.0..TAU);
            for i in 0..n.min(len.saturating_sub(start)) {
                let t = i as f64 / sr;
                let env = (t / 0.01).min(1.0) * (-decay * t).exp();
                let s = (TAU * f * t + phase).sin() + 0.5 * (2.0 * TAU * f * t + phase).sin();
                x[start + i] += amp * env * s;
            }
        }
        t0 += dur;
    }
    for v in &mut x {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v += 0.01 * n;
    }
    let peak = x.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-12);
    let s = x.iter().map(|v| (v / peak * PEAK) as f32).collect();
    AudioBuffer::new(s, sample_rate).expect("normalized to PEAK")
}

/// Writes `n` clips as `track_XXX.wav` under `dir` and returns the manifest
/// entries (absolute paths).
pub fn write_toy_corpus(
    dir: impl AsRef<Path>,
    n: usize,
    seconds: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<ManifestEntry>, DspError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| DspError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    (0..n)
        .map(|i| {
            let track_id = format!("track_{i:03}");
            let path = dir.join(format!("{track_id}.wav"));
            wav::write(&path, &toy_clip(derive_indexed(seed, "toy-clip", i as u64), seconds, sample_rate))?;
            Ok(ManifestEntry { track_id, path })
        })
        .collect()
}
