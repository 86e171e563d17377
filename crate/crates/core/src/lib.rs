//! Black-box saliency generation and faithfulness evaluation.
//!
//! The crate covers explanation generation (RISE, sliding-window occlusion),
//! the perturbation metrics (insertion/deletion curves, ROAD, Average Drop,
//! Increase in Confidence, Pointing Game), sparsity measurement, and the
//! rank statistics used to check how well metrics agree with each other.
//! Models are reached through [`model::ModelAdapter`], either one of the
//! built-in synthetic models or an external scorer speaking the framed
//! protocol in [`model::protocol`].

pub mod error;
pub mod faithfulness;
pub mod harness;
pub mod image;
pub mod model;
pub mod pointmetrics;
pub mod road;
pub mod saliency;
pub mod sanity;

pub use error::{Error, Result};
pub use image::{ColorSpace, ImageTensor, NormalizationSpec, SaliencyMap};
