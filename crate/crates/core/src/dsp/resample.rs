//! Band-limited resampling by windowed-sinc interpolation.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{AudioBuffer, DspError};

/// Zero crossings of the sinc kernel on each side.
const HALF_ZEROS: usize = 32;
/// Kernel table resolution per zero crossing.
const TABLE_RES: usize = 512;
const KAISER_BETA: f64 = 8.6;
/// Passband edge relative to the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.95;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc sampled at `TABLE_RES` points per zero crossing.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = HALF_ZEROS * TABLE_RES + 2;
        let norm = bessel_i0(KAISER_BETA);
        (0..n)
            .map(|i| {
                let x = i as f64 / TABLE_RES as f64;
                if x >= HALF_ZEROS as f64 {
                    return 0.0;
                }
                let sinc = if i == 0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                let r = x / HALF_ZEROS as f64;
                sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            })
            .collect()
    })
}

fn kernel(table: &[f64], x: f64) -> f64 {
    let pos = x.abs() * TABLE_RES as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + (table[i + 1] - table[i]) * frac
}

/// Band-limited interpolation of `x` at positions `i / ratio` for
/// `i < out_len`. `ratio` is output samples per input sample.
pub(crate) fn interpolate(x: &[f32], ratio: f64, out_len: usize) -> Vec<f64> {
    let cutoff = ROLLOFF * ratio.min(1.0);
    let half_width = HALF_ZEROS as f64 / cutoff;
    let table = kernel_table();
    let n = x.len() as isize;
    (0..out_len)
        .map(|i| {
            let t = i as f64 / ratio;
            let lo = ((t - half_width).ceil() as isize).max(0);
            let hi = ((t + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                acc += f64::from(x[k as usize]) * kernel(table, cutoff * (t - k as f64));
            }
            acc * cutoff
        })
        .collect()
}

/// Resamples `buf` to `target_rate`. Output length is the input length
/// scaled by `target_rate / source_rate`, rounded. Samples outside the
/// buffer are treated as zero.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, DspError> {
    if buf.is_empty() {
        return Err(DspError::Empty);
    }
    if target_rate == 0 {
        return Err(DspError::InvalidSampleRate(target_rate));
    }
    let src_rate = buf.sample_rate();
    if src_rate == target_rate {
        return Ok(buf.clone());
    }
    let ratio = f64::from(target_rate) / f64::from(src_rate);
    let out_len = (buf.len() as f64 * ratio).round() as usize;
    let out = interpolate(buf.samples(), ratio, out_len)
        .into_iter()
        .map(|v| v.clamp(-1.0, 1.0) as f32)
        .collect();
    AudioBuffer::new(out, target_rate)
}
