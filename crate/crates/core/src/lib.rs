//! Multimodal fusion over precomputed per-modality feature vectors:
//! a convolution + attention fusion head with hand-derived backprop,
//! dataset tooling (synthetic generation, noise injection, pseudo-label
//! merging), classification and set-overlap metrics, and a training,
//! gradient-check, and ablation harness.

pub mod annotate;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
