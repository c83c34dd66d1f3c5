use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{check_range, peak_normalize, AugmentError};
use crate::dsp::AudioBuffer;

/// Convolves `buf` with `ir`, keeping the first `buf.len()` samples of the
/// full convolution. The result is peak-normalized only if it leaves
/// [-1, 1].
pub fn apply_reverb(buf: &AudioBuffer, ir: &AudioBuffer) -> Result<AudioBuffer, AugmentError> {
    if ir.is_empty() {
        return Err(AugmentError::EmptyImpulseResponse);
    }
    if buf.is_empty() {
        return Ok(buf.clone());
    }
    let n = buf.len() + ir.len() - 1;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |x: &[f32]| {
        let mut v: Vec<Complex<f64>> = x.iter().map(|&s| Complex::new(f64::from(s), 0.0)).collect();
        v.resize(n, Complex::new(0.0, 0.0));
        v
    };
    let mut a = pad(buf.samples());
    let mut b = pad(ir.samples());
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    let out: Vec<f64> = a[..buf.len()].iter().map(|c| c.re * scale).collect();
    Ok(AudioBuffer::new(peak_normalize(out), buf.sample_rate())?)
}

/// A synthetic room response: a unit direct path followed by an
/// exponentially decaying Gaussian tail reaching −60 dB at `rt60` seconds.
pub fn synthetic_impulse_response<R: Rng + ?Sized>(
    rt60: f64,
    sample_rate: u32,
    rng: &mut R,
) -> Result<AudioBuffer, AugmentError> {
    check_range("rt60", rt60, 1e-3, 10.0)?;
    let len = ((rt60 * f64::from(sample_rate)).ceil() as usize).max(1);
    let decay = 6.9 / (rt60 * f64::from(sample_rate));
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let g: f64 = StandardNormal.sample(rng);
            0.1 * g * (-decay * i as f64).exp()
        })
        .collect();
    h[0] = 1.0;
    Ok(AudioBuffer::new(peak_normalize(h), sample_rate)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn naive(x: &[f32], h: &[f32]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                (0..h.len())
                    .filter(|&j| j <= i)
                    .map(|j| f64::from(x[i - j]) * f64::from(h[j]))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn unit_impulse_is_identity_and_delay_delays() {
        let x = AudioBuffer::new(vec![0.5, -0.25, 0.125, 1.0], 16_000).unwrap();
        let y = apply_reverb(&x, &AudioBuffer::new(vec![1.0], 16_000).unwrap()).unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() < 1e-7);
        }
        let d = apply_reverb(&x, &AudioBuffer::new(vec![0.0, 1.0], 16_000).unwrap()).unwrap();
        let expected = [0.0, 0.5, -0.25, 0.125];
        for (a, b) in expected.iter().zip(d.samples()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = rng_from_seed(4);
        for _ in 0..10 {
            let n = rng.random_range(50..3000);
            let m = rng.random_range(1..400);
            let x: Vec<f32> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
            let h: Vec<f32> = (0..m).map(|_| rng.random_range(-0.05..0.05)).collect();
            let y = apply_reverb(&AudioBuffer::new(x.clone(), 16_000).unwrap(), &AudioBuffer::new(h.clone(), 16_000).unwrap()).unwrap();
            for (a, b) in naive(&x, &h).iter().zip(y.samples()) {
                assert!((a - f64::from(*b)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn loud_output_is_peak_normalized() {
        let x = AudioBuffer::new(vec![1.0; 100], 16_000).unwrap();
        let y = apply_reverb(&x, &AudioBuffer::new(vec![1.0; 10], 16_000).unwrap()).unwrap();
        let peak = y.samples().iter().fold(0f32, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-6);
        assert!((y.samples()[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn empty_ir_is_rejected() {
        let x = AudioBuffer::new(vec![0.1; 10], 16_000).unwrap();
        assert!(matches!(
            apply_reverb(&x, &AudioBuffer::silence(0, 16_000)),
            Err(AugmentError::EmptyImpulseResponse)
        ));
    }

    #[test]
    fn synthetic_ir_decays() {
        let h = synthetic_impulse_response(0.3, 16_000, &mut rng_from_seed(1)).unwrap();
        assert_eq!(h.len(), 4800);
        assert_eq!(h.samples()[0], 1.0);
        let head: f64 = h.samples()[1..400].iter().map(|v| f64::from(*v).powi(2)).sum();
        let tail: f64 = h.samples()[4400..4799].iter().map(|v| f64::from(*v).powi(2)).sum();
        assert!(tail < head * 1e-4);
    }
}
