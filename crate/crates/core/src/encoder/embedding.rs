use super::EncoderError;

/// Tolerance on |‖v‖ − 1| for a valid embedding.
pub const UNIT_NORM_TOL: f64 = 1e-5;

/// ℓ2-normalized fingerprint vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps `values`, rejecting vectors that are not unit norm.
    pub fn new(values: Vec<f32>) -> Result<Self, EncoderError> {
        let norm = norm(&values);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(EncoderError::NotNormalized { norm });
        }
        Ok(Self(values))
    }

    /// Scales `values` to unit norm.
    pub fn normalized(mut values: Vec<f32>) -> Result<Self, EncoderError> {
        let n = norm(&values);
        if !(n.is_finite() && n > 0.0) {
            return Err(EncoderError::NotNormalized { norm: n });
        }
        values.iter_mut().for_each(|v| *v = (f64::from(*v) / n) as f32);
        Self::new(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    /// Inner product, accumulated in f64. Equal to cosine similarity for
    /// unit vectors.
    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}
