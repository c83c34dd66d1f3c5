use rand::Rng;

use super::{
    add_noise_at_snr, apply_reverb, apply_time_shift, colored_noise, pitch_shift, polarity_invert, sample_shift, spec_augment,
    tanh_distort, time_stretch, AugmentError, AugmentationSpec, Corpora, ShiftDirection,
};
use crate::dsp::{AudioBuffer, Featurizer, MelSpectrogram};

/// A positive pair: the clean segment and its augmented copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Replica {
    pub original: MelSpectrogram,
    pub replica: MelSpectrogram,
    /// Signed time shift applied to the replica, in seconds.
    pub shift: f64,
}

pub(crate) fn uniform<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// `len` samples of `context` from `start`, zero-padded past its end.
pub(crate) fn cut_padded(context: &AudioBuffer, start: usize, len: usize) -> Result<AudioBuffer, AugmentError> {
    let end = (start + len).min(context.len());
    let mut s = context.samples()[start.min(end)..end].to_vec();
    s.resize(len, 0.0);
    Ok(AudioBuffer::new(s, context.sample_rate())?)
}

pub(crate) fn fit_length(buf: AudioBuffer, len: usize) -> Result<AudioBuffer, AugmentError> {
    if buf.len() == len {
        return Ok(buf);
    }
    let rate = buf.sample_rate();
    let mut s = buf.into_samples();
    s.resize(len, 0.0);
    Ok(AudioBuffer::new(s, rate)?)
}

/// Builds the (original, replica) pair for the segment starting at sample
/// `start` of `context`. The replica is the [`augment_audio`] waveform,
/// featurized and finally SpecAugment-masked.
pub fn make_replica<R: Rng + ?Sized>(
    context: &AudioBuffer,
    start: usize,
    spec: &AugmentationSpec,
    corpora: &Corpora,
    featurizer: &Featurizer,
    rng: &mut R,
) -> Result<Replica, AugmentError> {
    let seg_len = featurizer.config().segment_samples();
    let original = featurizer.log_mel(&context.slice(start, seg_len)?)?;
    let (audio, shift) = augment_audio(context, start, seg_len, spec, corpora, rng)?;
    let mut replica = featurizer.log_mel(&audio)?;
    if spec.spec_augment.enabled && rng.random_bool(spec.probability) {
        replica = spec_augment(&replica, &spec.spec_augment, rng);
    }
    Ok(Replica {
        original,
        replica,
        shift,
    })
}

/// The waveform half of the replica chain for `seg_len` samples of
/// `context` from `start`: re-cut at a Beta-distributed offset, then
/// time-stretched, pitch-shifted, reverberated, mixed with background and
/// colored noise, polarity inverted and tanh-distorted (each if enabled and
/// drawn). The context must extend `max_shift` seconds on both sides of the
/// segment when shifting is enabled. Returns the audio and the signed
/// shift in seconds.
pub fn augment_audio<R: Rng + ?Sized>(
    context: &AudioBuffer,
    start: usize,
    seg_len: usize,
    spec: &AugmentationSpec,
    corpora: &Corpora,
    rng: &mut R,
) -> Result<(AudioBuffer, f64), AugmentError> {
    let sr = context.sample_rate();
    let clean = context.slice(start, seg_len)?;
    let p = spec.probability;
    let fires = |enabled: bool, rng: &mut R| enabled && rng.random_bool(p);

    let (mut start, mut shift, mut cut) = (start, 0.0, clean);
    if spec.time_shift.enabled {
        let offset = sample_shift(&spec.time_shift, rng)?;
        let dir = ShiftDirection::random(rng);
        cut = apply_time_shift(context, start, seg_len, offset, dir)?;
        let delta = (offset * f64::from(sr)).round() as i64 * dir.sign();
        start = (start as i64 + delta) as usize;
        shift = delta as f64 / f64::from(sr);
    }

    let mut audio = if fires(spec.time_stretch.enabled, rng) {
        let rate = uniform(spec.time_stretch.rate, rng);
        let source = ((seg_len as f64) * rate).round() as usize;
        fit_length(time_stretch(&cut_padded(context, start, source)?, rate)?, seg_len)?
    } else {
        cut
    };
    if fires(spec.pitch_shift.enabled, rng) {
        audio = pitch_shift(&audio, uniform(spec.pitch_shift.semitones, rng))?;
    }
    if fires(spec.reverb.enabled, rng) {
        audio = apply_reverb(&audio, corpora.impulse_responses.pick(rng))?;
    }
    if fires(spec.background_noise.enabled, rng) {
        let clip = corpora.noise.pick(rng);
        let rot = rng.random_range(0..clip.len());
        let rotated: Vec<f32> = clip.samples()[rot..].iter().chain(&clip.samples()[..rot]).copied().collect();
        let noise = AudioBuffer::new(rotated, clip.sample_rate())?;
        let snr = uniform(spec.background_noise.snr_db, rng);
        if audio.power() > 0.0 {
            audio = add_noise_at_snr(&audio, &noise, snr)?;
        }
    }
    if fires(spec.colored_noise.enabled, rng) {
        let decay = uniform(spec.colored_noise.decay, rng);
        let noise = colored_noise(seg_len, decay, sr, rng)?;
        let snr = uniform(spec.colored_noise.snr_db, rng);
        if audio.power() > 0.0 {
            audio = add_noise_at_snr(&audio, &noise, snr)?;
        }
    }
    if spec.polarity_inversion.enabled && rng.random_bool(spec.polarity_inversion.probability) {
        audio = polarity_invert(&audio);
    }
    if fires(spec.tanh_distortion.enabled, rng) {
        audio = tanh_distort(&audio, uniform(spec.tanh_distortion.drive, rng))?;
    }
    Ok((audio, shift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SpectralConfig;
    use crate::rng::rng_from_seed;

    fn setup() -> (AudioBuffer, Featurizer, Corpora) {
        let mut rng = rng_from_seed(1);
        let ctx: Vec<f32> = (0..56_000)
            .map(|i| (0.3 * (i as f64 * 0.05).sin()) as f32 + rng.random_range(-0.1..0.1))
            .collect();
        let cfg = SpectralConfig::default().with_n_mels(16);
        (
            AudioBuffer::new(ctx, 16_000).unwrap(),
            Featurizer::new(cfg).unwrap(),
            Corpora::synthetic(16_000, 0).unwrap(),
        )
    }

    #[test]
    fn disabled_spec_gives_identical_pair() {
        let (ctx, feat, corpora) = setup();
        let r = make_replica(&ctx, 4000, &AugmentationSpec::disabled(), &corpora, &feat, &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.original, r.replica);
        assert_eq!(r.shift, 0.0);
    }

    #[test]
    fn fixed_shift_matches_featurized_recut() {
        let (ctx, feat, corpora) = setup();
        let mut spec = AugmentationSpec::disabled();
        spec.time_shift.enabled = true;
        spec.time_shift.min_offset = 0.1;
        spec.time_shift.max_offset = 0.1;
        let mut saw = [false, false];
        for seed in 0..8 {
            let r = make_replica(&ctx, 4000, &spec, &corpora, &feat, &mut rng_from_seed(seed)).unwrap();
            let start = if r.shift > 0.0 { 5600 } else { 2400 };
            saw[usize::from(r.shift > 0.0)] = true;
            assert!((r.shift.abs() - 0.1).abs() < 1e-12);
            assert_eq!(r.replica, feat.log_mel(&ctx.slice(start, 48_000).unwrap()).unwrap());
            assert_eq!(r.original, feat.log_mel(&ctx.slice(4000, 48_000).unwrap()).unwrap());
        }
        assert_eq!(saw, [true, true]);
    }

    #[test]
    fn full_pipeline_is_deterministic_and_shaped() {
        let (ctx, feat, corpora) = setup();
        let mut spec = AugmentationSpec {
            probability: 1.0,
            ..AugmentationSpec::default()
        };
        spec.polarity_inversion.probability = 1.0;
        let a = make_replica(&ctx, 4000, &spec, &corpora, &feat, &mut rng_from_seed(7)).unwrap();
        let b = make_replica(&ctx, 4000, &spec, &corpora, &feat, &mut rng_from_seed(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.original, a.replica);
        assert_eq!(a.replica.n_frames(), a.original.n_frames());
        assert!(a.replica.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shift_without_margin_fails() {
        let (ctx, feat, corpora) = setup();
        let mut spec = AugmentationSpec::disabled();
        spec.time_shift.enabled = true;
        spec.time_shift.min_offset = 0.1;
        let errs = (0..8)
            .filter(|&s| make_replica(&ctx, 0, &spec, &corpora, &feat, &mut rng_from_seed(s)).is_err())
            .count();
        assert!(errs > 0);
    }
}
