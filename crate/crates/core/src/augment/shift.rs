use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{AugmentError, BetaShiftSpec};
use crate::dsp::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDirection {
    Earlier,
    Later,
}

impl ShiftDirection {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            ShiftDirection::Later
        } else {
            ShiftDirection::Earlier
        }
    }

    pub fn sign(self) -> i64 {
        match self {
            ShiftDirection::Earlier => -1,
            ShiftDirection::Later => 1,
        }
    }
}

/// Draws an offset in seconds from `min + Beta(α, β)·(max − min)`.
pub fn sample_shift<R: Rng + ?Sized>(spec: &BetaShiftSpec, rng: &mut R) -> Result<f64, AugmentError> {
    spec.validate()?;
    let span = spec.max_offset - spec.min_offset;
    if span == 0.0 {
        return Ok(spec.min_offset);
    }
    let beta = Beta::new(spec.alpha, spec.beta).map_err(|e| AugmentError::InvalidSpec(e.to_string()))?;
    let x: f64 = beta.sample(rng);
    Ok(spec.min_offset + x * span)
}

/// Re-cuts a `len`-sample segment that nominally starts at `start` within
/// `context`, moved by `offset` seconds in `direction`. The shifted window
/// must lie inside the context.
pub fn apply_time_shift(
    context: &AudioBuffer,
    start: usize,
    len: usize,
    offset: f64,
    direction: ShiftDirection,
) -> Result<AudioBuffer, AugmentError> {
    if !offset.is_finite() || offset < 0.0 {
        return Err(AugmentError::OutOfRange {
            what: "shift offset",
            value: offset,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let delta = (offset * f64::from(context.sample_rate())).round() as i64;
    let new_start = start as i64 + direction.sign() * delta;
    let end = new_start + len as i64;
    if new_start < 0 || end > context.len() as i64 {
        return Err(AugmentError::InsufficientContext {
            start: new_start,
            end,
            available: context.len(),
        });
    }
    Ok(context.slice(new_start as usize, len)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn default_shift_has_mean_120ms_and_matches_beta_cdf() {
        let spec = BetaShiftSpec::default();
        let mut rng = rng_from_seed(1);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_shift(&spec, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.120).abs() < 0.001, "mean {mean}");
        assert!(draws.iter().all(|&d| (0.0..=0.150).contains(&d)));
        // regularized incomplete beta I_x(8, 2) = 9x^8 − 8x^9
        let ks = ks_statistic(draws.iter().map(|d| d / 0.150).collect(), |x| 9.0 * x.powi(8) - 8.0 * x.powi(9));
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn uniform_shape_matches_uniform_cdf() {
        let spec = BetaShiftSpec {
            alpha: 1.0,
            beta: 1.0,
            min_offset: 0.02,
            max_offset: 0.1,
            ..BetaShiftSpec::default()
        };
        let mut rng = rng_from_seed(2);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_shift(&spec, &mut rng).unwrap()).collect();
        let ks = ks_statistic(draws, |x| (x - 0.02) / 0.08);
        assert!(ks < 0.01, "KS {ks}");
    }

    #[test]
    fn degenerate_range_is_constant() {
        let spec = BetaShiftSpec {
            max_offset: 0.0,
            ..BetaShiftSpec::default()
        };
        let mut rng = rng_from_seed(3);
        assert!((0..100).all(|_| sample_shift(&spec, &mut rng).unwrap() == 0.0));
    }

    #[test]
    fn shift_recuts_the_context() {
        let ctx = AudioBuffer::new((0..64_000).map(|i| i as f32 / 64_000.0).collect(), 16_000).unwrap();
        let base = apply_time_shift(&ctx, 8000, 48_000, 0.0, ShiftDirection::Later).unwrap();
        assert_eq!(base, ctx.slice(8000, 48_000).unwrap());
        let later = apply_time_shift(&ctx, 8000, 48_000, 0.150, ShiftDirection::Later).unwrap();
        assert_eq!(later.len(), 48_000);
        // ramp slope is 1/64000 per sample; 150 ms is 2400 samples
        let expected = (8000.0 + 0.150 * 16_000.0) / 64_000.0;
        assert!((f64::from(later.samples()[0]) - expected).abs() < 1e-6);
        let earlier = apply_time_shift(&ctx, 8000, 48_000, 0.150, ShiftDirection::Earlier).unwrap();
        assert_eq!(earlier.samples()[0], ctx.samples()[8000 - 2400]);
    }

    #[test]
    fn shift_without_context_fails() {
        let ctx = AudioBuffer::silence(48_000, 16_000);
        assert!(matches!(
            apply_time_shift(&ctx, 0, 48_000, 0.01, ShiftDirection::Earlier),
            Err(AugmentError::InsufficientContext { start: -160, .. })
        ));
        assert!(apply_time_shift(&ctx, 0, 48_000, 0.01, ShiftDirection::Later).is_err());
    }
}
