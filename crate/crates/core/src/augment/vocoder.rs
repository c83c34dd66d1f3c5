//! Phase-vocoder time stretching and pitch shifting.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{check_range, peak_normalize, AugmentError};
use crate::dsp::hann_window;
use crate::dsp::resample::interpolate;
use crate::dsp::AudioBuffer;

pub const MIN_STRETCH_RATE: f64 = 0.5;
pub const MAX_STRETCH_RATE: f64 = 2.0;
pub const MAX_SEMITONES: f64 = 12.0;

const N_FFT: usize = 1024;
const HOP: usize = 256;

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * ((p + PI) / (2.0 * PI)).floor()
}

/// Plays `x` back `rate` times faster without changing pitch; returns
/// exactly `out_len` samples (unclipped).
fn stretch_samples(x: &[f32], rate: f64, out_len: usize) -> Vec<f64> {
    let pad = N_FFT / 2;
    let mut padded = vec![0.0f64; pad];
    padded.extend(x.iter().map(|&v| f64::from(v)));
    padded.resize(padded.len() + pad + N_FFT, 0.0);
    let n_frames = 1 + (padded.len() - N_FFT) / HOP;
    let n_bins = N_FFT / 2 + 1;
    let window = hann_window(N_FFT);

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(N_FFT);
    let inv = planner.plan_fft_inverse(N_FFT);
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let frames: Vec<Vec<Complex<f64>>> = (0..n_frames)
        .map(|f| {
            let seg = &padded[f * HOP..f * HOP + N_FFT];
            for (b, (s, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
                *b = Complex::new(s * w, 0.0);
            }
            fwd.process(&mut buf);
            buf[..n_bins].to_vec()
        })
        .collect();

    let advance: Vec<f64> = (0..n_bins).map(|k| 2.0 * PI * (k * HOP) as f64 / N_FFT as f64).collect();
    let mut phase: Vec<f64> = frames[0].iter().map(|c| c.arg()).collect();
    let total = pad + out_len + N_FFT;
    let mut out = vec![0.0f64; total];
    let mut norm = vec![0.0f64; total];
    let mut t = 0.0f64;
    let mut step = 0usize;
    while (t.floor() as usize) + 1 < n_frames && step * HOP + N_FFT <= total {
        let i = t.floor() as usize;
        let a = t - i as f64;
        let (cur, next) = (&frames[i], &frames[i + 1]);
        for k in 0..n_bins {
            let mag = (1.0 - a) * cur[k].norm() + a * next[k].norm();
            buf[k] = Complex::from_polar(mag, phase[k]);
            let dphi = wrap_phase(next[k].arg() - cur[k].arg() - advance[k]);
            phase[k] += advance[k] + dphi;
        }
        buf[0].im = 0.0;
        buf[N_FFT / 2].im = 0.0;
        for k in 1..N_FFT / 2 {
            buf[N_FFT - k] = buf[k].conj();
        }
        inv.process(&mut buf);
        let at = step * HOP;
        for (j, w) in window.iter().enumerate() {
            out[at + j] += buf[j].re / N_FFT as f64 * w;
            norm[at + j] += w * w;
        }
        t += rate;
        step += 1;
    }
    let floor = 1e-6;
    (pad..pad + out_len)
        .map(|i| if norm[i] > floor { out[i] / norm[i] } else { 0.0 })
        .collect()
}

/// Changes duration by `1/rate` while preserving pitch. The output has
/// `round(len / rate)` samples.
pub fn time_stretch(buf: &AudioBuffer, rate: f64) -> Result<AudioBuffer, AugmentError> {
    check_range("stretch rate", rate, MIN_STRETCH_RATE, MAX_STRETCH_RATE)?;
    if buf.is_empty() {
        return Ok(buf.clone());
    }
    let out_len = (buf.len() as f64 / rate).round() as usize;
    let y = stretch_samples(buf.samples(), rate, out_len);
    Ok(AudioBuffer::new(peak_normalize(y), buf.sample_rate())?)
}

/// Scales every frequency by `2^(semitones/12)` keeping the length: a
/// time stretch by the inverse factor followed by resampling.
pub fn pitch_shift(buf: &AudioBuffer, semitones: f64) -> Result<AudioBuffer, AugmentError> {
    check_range("pitch shift semitones", semitones, -MAX_SEMITONES, MAX_SEMITONES)?;
    if buf.is_empty() {
        return Ok(buf.clone());
    }
    let factor = 2f64.powf(semitones / 12.0);
    let long_len = (buf.len() as f64 * factor).round() as usize;
    let stretched: Vec<f32> = stretch_samples(buf.samples(), 1.0 / factor, long_len)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let y = interpolate(&stretched, 1.0 / factor, buf.len());
    Ok(AudioBuffer::new(peak_normalize(y), buf.sample_rate())?)
}
