use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioBuffer, DspError, SpectralConfig};

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided short-time Fourier transform, row-major `[n_frames × n_bins]`.
#[derive(Debug, Clone)]
pub struct Stft {
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<Complex<f64>>,
}

impl Stft {
    pub fn frame(&self, i: usize) -> &[Complex<f64>] {
        &self.data[i * self.n_bins..(i + 1) * self.n_bins]
    }
}

/// Reusable Hann-windowed FFT framer.
#[derive(Clone)]
pub(crate) struct Framer {
    fft_len: usize,
    hop_len: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Framer {
    pub(crate) fn new(fft_len: usize, hop_len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Self {
            fft_len,
            hop_len,
            window: hann_window(fft_len),
            fft,
        }
    }

    pub(crate) fn n_frames(&self, len: usize) -> usize {
        if len < self.fft_len {
            0
        } else {
            (len - self.fft_len) / self.hop_len + 1
        }
    }

    /// Calls `f(frame_index, one_sided_spectrum)` for every full frame.
    pub(crate) fn for_each_frame<F: FnMut(usize, &[Complex<f64>])>(&self, x: &[f32], mut f: F) {
        let n_bins = self.fft_len / 2 + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for frame in 0..self.n_frames(x.len()) {
            let start = frame * self.hop_len;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(f64::from(x[start + i]) * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            f(frame, &buf[..n_bins]);
        }
    }
}

pub fn stft(buf: &AudioBuffer, cfg: &SpectralConfig) -> Result<Stft, DspError> {
    cfg.validate()?;
    if buf.sample_rate() != cfg.sample_rate {
        return Err(DspError::SampleRateMismatch {
            expected: cfg.sample_rate,
            found: buf.sample_rate(),
        });
    }
    if buf.len() < cfg.fft_len {
        return Err(DspError::TooShort {
            found: buf.len(),
            required: cfg.fft_len,
        });
    }
    let framer = Framer::new(cfg.fft_len, cfg.hop_len);
    let n_bins = cfg.n_bins();
    let n_frames = framer.n_frames(buf.len());
    let mut data = Vec::with_capacity(n_frames * n_bins);
    framer.for_each_frame(buf.samples(), |_, spec| data.extend_from_slice(spec));
    Ok(Stft {
        n_frames,
        n_bins,
        data,
    })
}
