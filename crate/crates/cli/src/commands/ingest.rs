use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use image::GrayImage;
use log::{info, warn};
use rayon::prelude::*;
use tilesift::config::PipelineConfig;
use tilesift::raster::{load_image, resample, screen_candidate, ScreenVerdict};

use super::out_dir;
use crate::store::{
    label_field, read_manifest, write_store, StoreRow, IMAGE_DIR, NORMALIZATION_LOG,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: usize,
}

enum Outcome {
    Accepted { row: StoreRow, line: String },
    Rejected { line: String },
}

/// Screens, resamples and stores every image in `manifest`, writing the
/// store CSV and a normalization log under the output directory.
pub fn run(manifest: &Path, config: &PipelineConfig) -> Result<IngestSummary> {
    let rows = read_manifest(manifest)?;
    if rows.is_empty() {
        warn!(
            "manifest {} lists no images; the store is empty",
            manifest.display()
        );
    }
    let out = out_dir(config)?;
    std::fs::create_dir_all(out.join(IMAGE_DIR))?;
    let policy = config.resolution_policy()?;

    let outcomes = rows
        .par_iter()
        .map(|row| -> Result<Outcome> {
            let mut img = load_image(&row.path, row.px_per_cm, row.label)
                .with_context(|| format!("image {}", row.image_id))?;
            img.image_id = row.image_id.clone();
            let ratio = match screen_candidate(&img, &policy) {
                ScreenVerdict::Accept { ratio } => ratio,
                ScreenVerdict::Reject(reason) => {
                    return Ok(Outcome::Rejected {
                        line: format!("{}: rejected: {reason}", row.image_id),
                    })
                }
            };
            let normalized = resample(&img, policy.target_resolution)
                .with_context(|| format!("resampling {}", row.image_id))?;
            let rel = format!("{IMAGE_DIR}/{}.png", row.image_id);
            let (w, h) = (normalized.width(), normalized.height());
            GrayImage::from_raw(w as u32, h as u32, normalized.pixels().to_vec())
                .expect("pixel buffer matches dimensions")
                .save(out.join(&rel))
                .with_context(|| format!("writing {rel}"))?;
            Ok(Outcome::Accepted {
                line: format!(
                    "{}: accepted (ratio {ratio:.3}, {}x{} -> {w}x{h})",
                    row.image_id,
                    img.width(),
                    img.height()
                ),
                row: StoreRow {
                    image_id: row.image_id.clone(),
                    path: rel,
                    px_per_cm: policy.target_resolution,
                    label: label_field(row.label),
                    width: w,
                    height: h,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut log = String::new();
    let mut store = Vec::new();
    for outcome in outcomes {
        match outcome {
            Outcome::Accepted { row, line } => {
                let _ = writeln!(log, "{line}");
                store.push(row);
            }
            Outcome::Rejected { line } => {
                warn!("{line}");
                let _ = writeln!(log, "{line}");
            }
        }
    }
    std::fs::write(out.join(NORMALIZATION_LOG), log)?;
    write_store(&out, &store)?;
    let summary = IngestSummary {
        accepted: store.len(),
        rejected: rows.len() - store.len(),
    };
    info!(
        "ingested {} images, rejected {}",
        summary.accepted, summary.rejected
    );
    Ok(summary)
}
