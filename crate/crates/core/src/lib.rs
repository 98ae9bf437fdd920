//! Patch-based texture synthesis driven by entropy-regularized optimal
//! transport, alongside nearest-neighbor and bidirectional-similarity
//! matching, a random-filter gram-loss baseline, and an innovation-capacity
//! metric that quantifies verbatim copying.
//!
//! The crate is organized around the synthesis pipeline:
//!
//! * [`image`], [`pyramid`], [`patch`] — image tensors, multi-resolution
//!   pyramids, the patch extraction operator and its re-averaging inverse.
//! * [`transport`] — memory-sliced pairwise costs, NN/BS matching, the
//!   low-memory Sinkhorn solver, greedy near-permutation extraction, and a
//!   small-instance Hungarian oracle.
//! * [`synthesis`] — the coarse-to-fine synthesis loop.
//! * [`innovation`] — tile maps and the multi-resolution innovation capacity.
//! * [`gram`] — the random-convolution gram-loss baseline.

pub mod error;
pub mod gram;
pub mod image;
pub mod innovation;
pub mod lbfgs;
pub mod patch;
pub mod pyramid;
mod seed;
pub mod synthesis;
pub mod transport;

pub use error::{Error, Result};
pub use image::ImageTensor;
pub use patch::PatchMatrix;
pub use synthesis::{Heuristic, SynthesisConfig, SynthesisTrace};
