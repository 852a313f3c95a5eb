//! Batch front end for `tilesift`: image ingest, tiling and sifting,
//! aggregation, cross-validation and SVG plots.

pub mod args;
pub mod commands;
pub mod store;
pub mod svg;
