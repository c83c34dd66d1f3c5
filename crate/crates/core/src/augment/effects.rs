use crate::dsp::AudioBuffer;

use super::{check_range, AugmentError};

pub fn polarity_invert(buf: &AudioBuffer) -> AudioBuffer {
    let s = buf.samples().iter().map(|v| -v).collect();
    AudioBuffer::new(s, buf.sample_rate()).expect("negation preserves range")
}

/// `tanh(drive·x)/drive`: unity gain for small signals, saturating for
/// large ones. Output magnitude never exceeds the input's.
pub fn tanh_distort(buf: &AudioBuffer, drive: f64) -> Result<AudioBuffer, AugmentError> {
    check_range("tanh drive", drive, f64::MIN_POSITIVE, f64::MAX)?;
    let s = buf
        .samples()
        .iter()
        .map(|&v| ((drive * f64::from(v)).tanh() / drive) as f32)
        .collect();
    Ok(AudioBuffer::from_unnormalized(s, buf.sample_rate())?)
}

/// Maps a mixed signal into [-1, 1]: untouched when its peak is within
/// range, otherwise passed through `tanh`.
pub fn soft_clip(x: &[f64]) -> Vec<f32> {
    if x.iter().all(|v| v.abs() <= 1.0) {
        x.iter().map(|&v| v as f32).collect()
    } else {
        x.iter().map(|v| v.tanh() as f32).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> AudioBuffer {
        AudioBuffer::new((0..201).map(|i| (i as f32 - 100.0) / 100.0).collect(), 16_000).unwrap()
    }

    #[test]
    fn polarity_is_an_involution() {
        let b = ramp();
        assert_eq!(polarity_invert(&polarity_invert(&b)), b);
        assert_eq!(polarity_invert(&b).samples()[0], 1.0);
    }

    #[test]
    fn small_drive_is_near_identity() {
        let b = AudioBuffer::new((0..201).map(|i| (i as f32 - 100.0) / 1000.0).collect(), 16_000).unwrap();
        let d = tanh_distort(&b, 1e-3).unwrap();
        for (x, y) in b.samples().iter().zip(d.samples()) {
            assert!((x - y).abs() <= 1e-3 * x.abs() + 1e-9);
        }
    }

    #[test]
    fn distortion_is_bounded() {
        for drive in [0.1, 1.0, 10.0, 100.0] {
            let d = tanh_distort(&ramp(), drive).unwrap();
            assert!(d.samples().iter().all(|v| v.abs() < 1.0 || *v == 0.0));
        }
        assert!(tanh_distort(&ramp(), 0.0).is_err());
    }

    #[test]
    fn soft_clip_only_when_needed() {
        assert_eq!(soft_clip(&[0.5, -1.0]), vec![0.5, -1.0]);
        let y = soft_clip(&[0.5, 2.0]);
        assert!((f64::from(y[0]) - 0.5f64.tanh()).abs() < 1e-7);
        assert!(y[1] < 1.0);
    }
}
