use super::{AudioBuffer, DspError, SpectralConfig};

/// A fixed-length window cut from a longer buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start_time: f64,
    pub start_sample: usize,
    pub audio: AudioBuffer,
}

/// Number of full segments of `segment_len` samples starting every
/// `hop_samples` (rounded start positions) that fit in `len` samples.
pub fn segment_count(len: usize, segment_len: usize, hop_samples: f64) -> usize {
    if len < segment_len {
        return 0;
    }
    let mut k = 0usize;
    while ((k as f64) * hop_samples).round() as usize + segment_len <= len {
        k += 1;
    }
    k
}

/// Cuts `buf` into segments of `cfg.segment_seconds` starting at
/// 0, hop, 2·hop, ...; a trailing partial window is dropped.
pub fn segment(buf: &AudioBuffer, cfg: &SpectralConfig, hop: f64) -> Result<Vec<Segment>, DspError> {
    if !(hop > 0.0 && hop.is_finite()) {
        return Err(DspError::InvalidArgument(format!("hop must be positive, got {hop}")));
    }
    if buf.sample_rate() != cfg.sample_rate {
        return Err(DspError::SampleRateMismatch {
            expected: cfg.sample_rate,
            found: buf.sample_rate(),
        });
    }
    let seg_len = cfg.segment_samples();
    if buf.len() < seg_len {
        return Err(DspError::TooShort {
            found: buf.len(),
            required: seg_len,
        });
    }
    let hop_samples = hop * f64::from(cfg.sample_rate);
    let n = segment_count(buf.len(), seg_len, hop_samples);
    (0..n)
        .map(|k| {
            let start_sample = ((k as f64) * hop_samples).round() as usize;
            Ok(Segment {
                start_time: k as f64 * hop,
                start_sample,
                audio: buf.slice(start_sample, seg_len)?,
            })
        })
        .collect()
}
