//! Adversarially robust sentence embeddings on a desk-scale budget.
//!
//! The crate trains a small transformer sentence encoder with a robust
//! contrastive objective: an inner loop generates norm-bounded adversarial
//! perturbations of the token embeddings (per-token steps with gradient
//! scaling plus interleaved PGD/FGSM at the sentence level), and the outer
//! loop minimises a contrastive loss over clean, dropout-positive and
//! adversarial views together with a replaced-token-detection term. A
//! black-box attack harness and an evaluation suite (semantic similarity,
//! transfer probing, alignment/uniformity diagnostics) measure what the
//! training buys.
//!
//! Everything runs in f64 on CPU and is deterministic given a master seed.

// Indexed loops over parallel buffers and tuple-shaped dataset types are the
// clearer spelling in the numeric kernels here.
#![allow(clippy::needless_range_loop, clippy::type_complexity, clippy::too_many_arguments)]

pub mod attacks;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod objectives;
pub mod perturbation;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use perturbation::{HyperParams, NormKind};
pub use tensor::Tensor;
