//! Code-anchored educational diagram generation.
//!
//! Stage 1 asks a language model for rendering code whose label-drawing calls
//! carry the ground-truth labels, verifies the code and executes it in a
//! sandbox. Stage 2 extracts a Canny edge "cage" from the programmatic
//! rendering, hands it to a diffusion backend for stylization and copies the
//! original label regions back into the result.
//!
//! The crate also carries the evaluation suite (label exact-match, character
//! error rate, Fréchet distance, Krippendorff's alpha, pair verification and
//! the cost model) and the run harness that ties everything together.
//!
//! All model-facing pieces sit behind traits in [`backends`]; deterministic
//! mock implementations make the full pipeline runnable offline.

pub mod backends;
pub mod benchmark;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod refine;
pub mod synth;

pub use backends::BackendError;
pub use benchmark::{DiagramPrompt, GradeBand, Subject};
pub use geometry::BBox;
pub use imaging::{EdgeMap, GrayImage, RasterImage, RegionMask};
