use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{check_range, soft_clip, AugmentError};
use crate::dsp::AudioBuffer;

/// Repeats (or truncates) `noise` from its start to exactly `len` samples.
pub fn loop_to_length(noise: &AudioBuffer, len: usize) -> Result<AudioBuffer, AugmentError> {
    if noise.is_empty() {
        return Err(AugmentError::Silent("noise"));
    }
    let s = noise.samples().iter().copied().cycle().take(len).collect();
    Ok(AudioBuffer::new(s, noise.sample_rate())?)
}

/// Mixes `noise` into `clean` scaled so that the clean-to-noise power ratio
/// is `snr_db`. The noise is looped or truncated to the clean length; an
/// infinite SNR returns `clean` unchanged.
pub fn add_noise_at_snr(clean: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer, AugmentError> {
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    check_range("snr_db", snr_db, f64::MIN, f64::MAX)?;
    if noise.sample_rate() != clean.sample_rate() {
        return Err(crate::dsp::DspError::SampleRateMismatch {
            expected: clean.sample_rate(),
            found: noise.sample_rate(),
        }
        .into());
    }
    let p_clean = clean.power();
    if p_clean == 0.0 {
        return Err(AugmentError::Silent("clean"));
    }
    let noise = loop_to_length(noise, clean.len())?;
    let p_noise = noise.power();
    if p_noise == 0.0 {
        return Err(AugmentError::Silent("noise"));
    }
    let scale = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mixed: Vec<f64> = clean
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(&c, &n)| f64::from(c) + scale * f64::from(n))
        .collect();
    Ok(AudioBuffer::new(soft_clip(&mixed), clean.sample_rate())?)
}

/// Gaussian noise whose expected power spectral density falls as
/// `1/f^decay` (0 white, 1 pink, 2 brown), peak-normalized to 1.
pub fn colored_noise<R: Rng + ?Sized>(
    len: usize,
    decay: f64,
    sample_rate: u32,
    rng: &mut R,
) -> Result<AudioBuffer, AugmentError> {
    check_range("decay exponent", decay, 0.0, 8.0)?;
    if len == 0 {
        return Ok(AudioBuffer::silence(0, sample_rate));
    }
    let mut spectrum = vec![Complex::new(0.0f64, 0.0); len];
    for k in 1..=len / 2 {
        let gain = (k as f64).powf(-decay / 2.0);
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = if 2 * k == len { 0.0 } else { StandardNormal.sample(rng) };
        spectrum[k] = Complex::new(re * gain, im * gain);
        spectrum[len - k] = spectrum[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut spectrum);
    let x: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let peak = x.iter().fold(0f64, |m, v| m.max(v.abs()));
    let s = if peak > 0.0 {
        x.iter().map(|v| (v / peak) as f32).collect()
    } else {
        vec![0.0; len]
    };
    Ok(AudioBuffer::new(s, sample_rate)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use std::f64::consts::PI;

    fn db(x: f64) -> f64 {
        10.0 * x.log10()
    }

    #[test]
    fn infinite_snr_is_identity() {
        let clean = AudioBuffer::new(vec![0.1, -0.2, 0.3], 16_000).unwrap();
        let noise = AudioBuffer::new(vec![0.5, 0.5], 16_000).unwrap();
        assert_eq!(add_noise_at_snr(&clean, &noise, f64::INFINITY).unwrap(), clean);
    }

    #[test]
    fn equal_power_at_zero_db_adds_noise_unscaled() {
        let clean = AudioBuffer::new(vec![0.2, -0.2, 0.2, -0.2], 16_000).unwrap();
        let noise = AudioBuffer::new(vec![-0.2, -0.2, 0.2, 0.2], 16_000).unwrap();
        let mix = add_noise_at_snr(&clean, &noise, 0.0).unwrap();
        for i in 0..4 {
            assert!((mix.samples()[i] - (clean.samples()[i] + noise.samples()[i])).abs() < 1e-7);
        }
    }

    #[test]
    fn measured_snr_matches_request() {
        let mut rng = rng_from_seed(10);
        for case in 0..200 {
            let n = rng.random_range(1000..5000);
            let f = rng.random_range(50.0..4000.0);
            let clean: Vec<f32> = (0..n)
                .map(|i| (0.3 * (2.0 * PI * f * i as f64 / 16_000.0).sin()) as f32)
                .collect();
            let clean = AudioBuffer::new(clean, 16_000).unwrap();
            let noise = AudioBuffer::new((0..rng.random_range(100..6000)).map(|_| rng.random_range(-0.5..0.5)).collect(), 16_000).unwrap();
            let snr = rng.random_range(5.0..40.0);
            let mix = add_noise_at_snr(&clean, &noise, snr).unwrap();
            let residual: f64 = mix
                .samples()
                .iter()
                .zip(clean.samples())
                .map(|(&m, &c)| (f64::from(m) - f64::from(c)).powi(2))
                .sum::<f64>()
                / n as f64;
            let measured = db(clean.power() / residual);
            assert!((measured - snr).abs() < 0.01, "case {case}: {measured} vs {snr}");
        }
    }

    #[test]
    fn silent_inputs_are_rejected() {
        let clean = AudioBuffer::silence(100, 16_000);
        let noise = AudioBuffer::new(vec![0.1; 10], 16_000).unwrap();
        assert!(matches!(add_noise_at_snr(&clean, &noise, 10.0), Err(AugmentError::Silent("clean"))));
        assert!(matches!(add_noise_at_snr(&noise, &clean, 10.0), Err(AugmentError::Silent("noise"))));
    }

    fn spectral_slope(decay: f64) -> f64 {
        let n = 4096;
        let mut rng = rng_from_seed(decay.to_bits());
        let mut avg = vec![0.0f64; n / 2];
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        for _ in 0..100 {
            let x = colored_noise(n, decay, 16_000, &mut rng).unwrap();
            assert_eq!(x.len(), n);
            let mut buf: Vec<Complex<f64>> = x.samples().iter().map(|&v| Complex::new(f64::from(v), 0.0)).collect();
            fft.process(&mut buf);
            for k in 1..n / 2 {
                avg[k] += buf[k].norm_sqr();
            }
        }
        let pts: Vec<(f64, f64)> = (1..n / 2).map(|k| ((k as f64).ln(), avg[k].ln())).collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn colored_noise_has_requested_slope() {
        assert!(spectral_slope(0.0).abs() < 0.1);
        assert!((spectral_slope(1.0) + 1.0).abs() < 0.15);
        assert!((spectral_slope(2.0) + 2.0).abs() < 0.15);
    }
}
