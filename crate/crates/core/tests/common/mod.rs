//! Independent reference implementations used as oracles by the
//! integration tests. Nothing here calls into the library's numerics.

#![allow(dead_code)]

use std::f64::consts::PI;

/// NT-Xent over `2b` rows by explicit loops: rows `i` and `(i + b) mod 2b`
/// are positives; every other row is a negative.
pub fn nt_xent_dense(z: &[Vec<f64>], tau: f64) -> f64 {
    let n = z.len();
    let b = n / 2;
    let sim = |i: usize, j: usize| z[i].iter().zip(&z[j]).map(|(a, c)| a * c).sum::<f64>() / tau;
    let mut total = 0.0;
    for i in 0..n {
        let j = (i + b) % n;
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += sim(i, k).exp();
            }
        }
        total += -(sim(i, j).exp() / denom).ln();
    }
    total / n as f64
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Stabilized log-mel spectrogram via a direct DFT of every frame:
/// periodic Hann window, no padding, HTK triangles over [fmin, fmax],
/// natural log of power plus `eps`. Returns `[frames][n_mels]`.
#[allow(clippy::too_many_arguments)]
pub fn log_mel_naive(
    x: &[f32],
    sr: f64,
    n_fft: usize,
    hop: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
    eps: f64,
) -> Vec<Vec<f64>> {
    let bins = n_fft / 2 + 1;
    let window: Vec<f64> = (0..n_fft).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos()).collect();
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64)).collect();
    let tri = |m: usize, f: f64| {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        if f <= l || f >= r {
            0.0
        } else if f <= c {
            (f - l) / (c - l)
        } else {
            (r - f) / (r - c)
        }
    };
    let cos: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).cos()).collect();
    let sin: Vec<f64> = (0..n_fft).map(|i| (2.0 * PI * i as f64 / n_fft as f64).sin()).collect();
    let frames = (x.len() - n_fft) / hop + 1;
    (0..frames)
        .map(|t| {
            let frame: Vec<f64> = (0..n_fft).map(|n| f64::from(x[t * hop + n]) * window[n]).collect();
            let power: Vec<f64> = (0..bins)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (n, v) in frame.iter().enumerate() {
                        let idx = (k * n) % n_fft;
                        re += v * cos[idx];
                        im -= v * sin[idx];
                    }
                    re * re + im * im
                })
                .collect();
            (0..n_mels)
                .map(|m| {
                    let e: f64 = (0..bins).map(|k| tri(m, k as f64 * sr / n_fft as f64) * power[k]).sum();
                    (e + eps).ln()
                })
                .collect()
        })
        .collect()
}

/// CDF of Beta(8, 2): 9x^8 - 8x^9.
pub fn beta_8_2_cdf(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    9.0 * x.powi(8) - 8.0 * x.powi(9)
}

/// Two-sample-free Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `y[n] = Σ_k x[k] h[n-k]`, truncated to `x.len()` samples.
pub fn convolve_naive(x: &[f32], h: &[f32]) -> Vec<f64> {
    (0..x.len())
        .map(|n| (0..=n.min(h.len().saturating_sub(1))).map(|k| f64::from(x[n - k]) * f64::from(h[k])).sum())
        .collect()
}

/// Smallest and largest hit counts not rejected by an exact two-sided
/// binomial test at level `alpha` (probability `alpha/2` in each tail).
pub fn binomial_acceptance(n: usize, p: f64, alpha: f64) -> (usize, usize) {
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = (1.0 - p).powi(n as i32);
    for k in 0..n {
        pmf[k + 1] = pmf[k] * (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    let mut lo = 0;
    let mut tail = 0.0;
    while tail + pmf[lo] <= alpha / 2.0 {
        tail += pmf[lo];
        lo += 1;
    }
    let mut hi = n;
    let mut tail = 0.0;
    while tail + pmf[hi] <= alpha / 2.0 {
        tail += pmf[hi];
        hi -= 1;
    }
    (lo, hi)
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Magnitude of the DFT of `x` at `freq` Hz (Goertzel-free direct sum).
pub fn dft_magnitude(x: &[f32], sr: f64, freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq * n as f64 / sr;
        re += f64::from(*v) * ph.cos();
        im -= f64::from(*v) * ph.sin();
    }
    (re * re + im * im).sqrt()
}

/// Power `P(x)` as mean square.
pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

pub fn sine(freq: f64, amp: f64, len: usize, sr: f64) -> Vec<f32> {
    (0..len).map(|n| (amp * (2.0 * PI * freq * n as f64 / sr).sin()) as f32).collect()
}
