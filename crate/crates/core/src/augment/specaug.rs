use rand::Rng;

use super::SpecAugmentSpec;
use crate::dsp::MelSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAxis {
    Frequency,
    Time,
}

/// A band of `width` mel bins or frames starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mask {
    pub axis: MaskAxis,
    pub start: usize,
    pub width: usize,
}

/// Sets the masked cells to `fill`. Bands are clipped to the spectrogram.
pub fn apply_masks(spec: &mut MelSpectrogram, masks: &[Mask], fill: f32) {
    let (n_frames, n_mels) = (spec.n_frames(), spec.n_mels());
    let values = spec.values_mut();
    for m in masks {
        match m.axis {
            MaskAxis::Frequency => {
                let end = (m.start + m.width).min(n_mels);
                for t in 0..n_frames {
                    values[t * n_mels + m.start.min(end)..t * n_mels + end].fill(fill);
                }
            }
            MaskAxis::Time => {
                let end = (m.start + m.width).min(n_frames);
                values[m.start.min(end) * n_mels..end * n_mels].fill(fill);
            }
        }
    }
}

fn draw<R: Rng + ?Sized>(axis: MaskAxis, count: usize, max_width: usize, dim: usize, rng: &mut R) -> Vec<Mask> {
    (0..count)
        .map(|_| {
            let width = rng.random_range(0..=max_width).min(dim);
            let start = rng.random_range(0..=dim - width);
            Mask { axis, start, width }
        })
        .collect()
}

/// SpecAugment-style masking: frequency bands then time bands, each with a
/// width uniform in `[0, max_width]` (clipped to the spectrogram), filled
/// with the mean of the unmasked input.
pub fn spec_augment<R: Rng + ?Sized>(spec: &MelSpectrogram, params: &SpecAugmentSpec, rng: &mut R) -> MelSpectrogram {
    let mut masks = draw(MaskAxis::Frequency, params.n_freq_masks, params.max_freq_width, spec.n_mels(), rng);
    masks.extend(draw(MaskAxis::Time, params.n_time_masks, params.max_time_width, spec.n_frames(), rng));
    let mut out = spec.clone();
    apply_masks(&mut out, &masks, spec.mean());
    out
}
