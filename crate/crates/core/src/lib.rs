//! GRASP core: embeds imperceptible adversarial shields into images so a
//! differentiable manipulation model produces visibly corrupted output,
//! while three-loss supervision and conflict-free gradient projection keep
//! the shielded image faithful to the original.
//!
//! Layout follows the pipeline: [`image`] holds the tensor and clipping
//! primitives, [`wavelet`] the Haar transform behind the low-frequency
//! constraint, [`losses`] the three supervision terms with analytic
//! gradients, [`projection`] the conflict-free composite, [`models`] the
//! pluggable differentiable model abstraction plus built-in surrogates,
//! [`bridge`] the wire protocol for external models, [`engine`] the
//! generation loop, and [`metrics`] the evaluation suite.

pub mod bridge;
pub mod engine;
pub mod error;
mod filter;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod projection;
pub mod rng;
pub mod wavelet;

pub use error::{Error, Result};
pub use image::{ImageTensor, NormKind, PixelRange};
