//! Entropy-sifted image tiling and ensemble probability aggregation for
//! patch-based image classification.
//!
//! Images are normalized to a common physical resolution ([`raster`]), cut
//! into overlapping tiles at one or more scales ([`tiler`]), filtered by
//! comparing each tile's Shannon entropy with the whole image's
//! ([`entropy`], [`sifter`]), scored per tile by a pluggable classifier
//! ([`classifier`]) and aggregated into image-level decisions
//! ([`aggregator`]). [`evaluator`] runs image-level cross-validation.

pub mod aggregator;
pub mod classifier;
pub mod config;
pub mod entropy;
pub mod error;
pub mod evaluator;
pub mod pipeline;
pub mod raster;
pub mod sifter;
pub mod tiler;

pub use error::{Error, Result};
