//! Conformer-based neural audio fingerprinting.
//!
//! 3-second audio segments are mapped to ℓ2-normalized embeddings by a small
//! conformer encoder trained with a contrastive (NT-Xent) objective on
//! augmented positive pairs. Embeddings are stored in a flat fingerprint
//! database and queried by exact cosine search.

pub mod binio;
pub mod config;
pub mod dsp;
pub mod manifest;
pub mod par;
pub mod rng;
pub mod synth;
pub mod trainer;
pub mod augment;
pub mod autodiff;
pub mod encoder;
pub mod eval;
pub mod index;
