use serde::{Deserialize, Serialize};

use super::EncoderError;

/// Architecture hyper-parameters.
///
/// The feed-forward width is `ffn_expansion × encoder_dim`; with the
/// default expansion of 1 the small, medium and large presets have 1.51M,
/// 8.80M and 26.2M parameters before positional embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConformerConfig {
    pub encoder_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub conv_kernel_size: usize,
    pub embedding_dim: usize,
    pub n_mels: usize,
    pub dropout_rate: f64,
    pub ffn_expansion: usize,
    /// Learned absolute positional embeddings added after the input projection.
    pub positional_embedding: bool,
    /// Longest supported input, in frames (rows of the positional table).
    pub max_frames: usize,
}

impl Default for ConformerConfig {
    fn default() -> Self {
        Self::small()
    }
}

impl ConformerConfig {
    pub fn small() -> Self {
        Self {
            encoder_dim: 256,
            n_layers: 2,
            n_heads: 4,
            conv_kernel_size: 5,
            embedding_dim: 128,
            n_mels: 80,
            dropout_rate: 0.5,
            ffn_expansion: 1,
            positional_embedding: true,
            max_frames: 368,
        }
    }

    pub fn medium() -> Self {
        Self {
            encoder_dim: 512,
            n_layers: 3,
            n_heads: 8,
            ..Self::small()
        }
    }

    pub fn large() -> Self {
        Self {
            encoder_dim: 768,
            n_layers: 4,
            n_heads: 12,
            n_mels: 96,
            ..Self::small()
        }
    }

    /// Test-scale model for gradient checks and toy experiments.
    pub fn tiny() -> Self {
        Self {
            encoder_dim: 16,
            n_layers: 1,
            n_heads: 2,
            n_mels: 8,
            ..Self::small()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tiny" => Some(Self::tiny()),
            "small" => Some(Self::small()),
            "medium" => Some(Self::medium()),
            "large" => Some(Self::large()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.encoder_dim == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return bad("encoder_dim, n_layers and n_heads must be positive".into());
        }
        if self.encoder_dim % self.n_heads != 0 {
            return bad(format!(
                "encoder_dim {} is not divisible by n_heads {}",
                self.encoder_dim, self.n_heads
            ));
        }
        if self.conv_kernel_size % 2 == 0 {
            return bad(format!("conv_kernel_size {} must be odd", self.conv_kernel_size));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        if self.ffn_expansion == 0 {
            return bad("ffn_expansion must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} must be in [0, 1)", self.dropout_rate));
        }
        if self.positional_embedding && self.max_frames == 0 {
            return bad("max_frames must be positive with positional embeddings".into());
        }
        Ok(())
    }

    pub fn ffn_dim(&self) -> usize {
        self.encoder_dim * self.ffn_expansion
    }
}
