//! Spherical-coordinate pre-processing and cascaded segmentation for
//! volumetric brain-tumor MRI.
//!
//! The crate resamples multi-channel volumes onto `(r, θ, φ)` grids about
//! chosen origins, hands each transformed volume to a [`segmenter`], projects
//! the predicted labels back, and merges, filters and post-processes the
//! ensemble. [`metrics`] provides BraTS-style evaluation.

pub mod error;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod origins;
pub mod pipeline;
pub mod polar;
pub mod segmenter;
pub mod spherical;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
