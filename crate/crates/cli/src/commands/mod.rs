//! One module per CLI verb.

pub mod evaluate;
pub mod ingest;
pub mod plot;
pub mod predict;
pub mod tile_sift;

use std::path::PathBuf;

use anyhow::{Context, Result};
use tilesift::config::PipelineConfig;

/// Creates the configured output directory if needed.
pub(crate) fn out_dir(config: &PipelineConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub(crate) fn decision_field(decision: bool) -> &'static str {
    if decision {
        "1"
    } else {
        "0"
    }
}
