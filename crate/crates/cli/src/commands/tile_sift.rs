use std::fmt::Write as _;

use anyhow::Result;
use rayon::prelude::*;
use tilesift::config::PipelineConfig;
use tilesift::pipeline::{tile_and_sift, ImageTiles};

use super::out_dir;
use crate::store::{load_store_image, read_store, write_tiles, TILE_MANIFEST};

pub const SUMMARY_FILE: &str = "tile_summary.csv";

/// Tiles and sifts every stored image. Writes the JSONL tile manifest and a
/// per-scale summary CSV; returns one human-readable line per image.
pub fn run(config: &PipelineConfig) -> Result<Vec<String>> {
    let out = out_dir(config)?;
    let store = read_store(&out)?;
    let images: Vec<ImageTiles> = store
        .par_iter()
        .map(|row| {
            let img = load_store_image(&out, row)?;
            Ok(tile_and_sift(&img, config)?)
        })
        .collect::<Result<_>>()?;

    let mut summary = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    summary.write_record([
        "image_id",
        "scale_id",
        "tile_w",
        "tile_h",
        "image_entropy",
        "threshold",
        "candidates",
        "retained",
        "retention_rate",
        "note",
    ])?;
    let mut lines = Vec::with_capacity(images.len());
    let mut records = Vec::new();
    for img in &images {
        let h = img.image_entropy.bits();
        let mut line = format!("{}: H={h:.4}", img.image_id);
        if h == 0.0 {
            line.push_str(" (constant image, threshold 0)");
        }
        for s in &img.scales {
            let kept = s.retained_count();
            let n = s.tiles.len();
            let rate = if n == 0 { 0.0 } else { kept as f64 / n as f64 };
            let note = if n == 0 {
                "tile larger than image"
            } else if s.fallback {
                "no tile met the threshold; kept the highest-entropy tile"
            } else if h == 0.0 {
                "constant image"
            } else {
                ""
            };
            summary.write_record([
                img.image_id.clone(),
                s.scale.scale_id.to_string(),
                s.scale.tile_w.to_string(),
                s.scale.tile_h.to_string(),
                h.to_string(),
                s.sift.threshold_bits.to_string(),
                n.to_string(),
                kept.to_string(),
                rate.to_string(),
                note.to_string(),
            ])?;
            let _ = write!(
                line,
                "; scale {} ({}x{}): N={n} n={kept} retention={:.1}%",
                s.scale.scale_id,
                s.scale.tile_w,
                s.scale.tile_h,
                rate * 100.0
            );
            if !note.is_empty() && h != 0.0 {
                let _ = write!(line, " [{note}]");
            }
            records.extend(s.tiles.iter().cloned());
        }
        lines.push(line);
    }
    summary.flush()?;
    write_tiles(&out.join(TILE_MANIFEST), &mut records)?;
    Ok(lines)
}
