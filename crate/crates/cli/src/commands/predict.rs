use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::warn;
use rayon::prelude::*;
use tilesift::aggregator::{aggregate, classify, combine_scales, tile_variance, ProbabilityVector};
use tilesift::classifier::{ClassifierModel, ExternalProbabilities, LogisticModel, TileClassifier};
use tilesift::config::PipelineConfig;
use tilesift::raster::SourceImage;
use tilesift::tiler::TileRecord;

use super::{decision_field, out_dir};
use crate::store::{load_store_image, read_store, read_tiles, TILE_MANIFEST};

pub const AGGREGATION_FILE: &str = "aggregation.csv";
pub const COMBINED_FILE: &str = "combined.csv";

const HEADER: [&str; 7] = [
    "image_id",
    "scale_id",
    "method",
    "score",
    "decision",
    "tile_count",
    "variance",
];

/// Where tile probabilities come from.
pub enum ModelSource<'a> {
    Model(&'a Path),
    Probs(&'a Path),
}

pub fn load_model(source: ModelSource<'_>) -> Result<ClassifierModel> {
    Ok(match source {
        ModelSource::Model(path) => ClassifierModel::Baseline(
            LogisticModel::load(path)
                .with_context(|| format!("loading model {}", path.display()))?,
        ),
        ModelSource::Probs(path) => ClassifierModel::External(
            ExternalProbabilities::load(path)
                .with_context(|| format!("loading probabilities {}", path.display()))?,
        ),
    })
}

struct ImageScores {
    image_id: String,
    scales: Vec<ProbabilityVector>,
}

/// Scores retained tiles and writes per-image, per-scale aggregates; with
/// configured weights also writes the combined multi-scale report.
/// Returns the number of images scored.
pub fn run(config: &PipelineConfig, model: &ClassifierModel) -> Result<usize> {
    let out = out_dir(config)?;
    let tiles = read_tiles(&out.join(TILE_MANIFEST))?;
    let mut by_image: BTreeMap<String, BTreeMap<u32, Vec<TileRecord>>> = BTreeMap::new();
    for t in tiles.into_iter().filter(|t| t.retained) {
        by_image
            .entry(t.image_id.clone())
            .or_default()
            .entry(t.scale_id)
            .or_default()
            .push(t);
    }
    let needs_pixels = matches!(model, ClassifierModel::Baseline(_));
    let store: BTreeMap<String, _> = if needs_pixels {
        read_store(&out)?
            .into_iter()
            .map(|r| (r.image_id.clone(), r))
            .collect()
    } else {
        BTreeMap::new()
    };

    let groups: Vec<(&String, &BTreeMap<u32, Vec<TileRecord>>)> = by_image.iter().collect();
    let scored = groups
        .par_iter()
        .map(|(id, scales)| -> Result<ImageScores> {
            let img = if needs_pixels {
                let row = store.get(*id).with_context(|| {
                    format!("image {id} is in the tile manifest but not the store")
                })?;
                Some(load_store_image(&out, row)?)
            } else {
                None
            };
            let vectors = scales
                .iter()
                .map(|(&scale_id, tiles)| {
                    let probs = tiles
                        .iter()
                        .map(|t| predict(model, img.as_ref(), t))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(ProbabilityVector::new(id.as_str(), scale_id, probs)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ImageScores {
                image_id: (*id).clone(),
                scales: vectors,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let method = config.method;
    let mut agg = csv::Writer::from_path(out.join(AGGREGATION_FILE))?;
    agg.write_record(HEADER)?;
    let mut combined = match &config.weights {
        Some(_) => {
            let mut w = csv::Writer::from_path(out.join(COMBINED_FILE))?;
            let mut header = HEADER.to_vec();
            header.extend(["final_score", "weights"]);
            w.write_record(header)?;
            Some(w)
        }
        None => None,
    };
    let n_scales = config.tile_sizes.len();
    for img in &scored {
        let rows: Vec<[String; 7]> = img
            .scales
            .iter()
            .map(|pv| {
                let score = aggregate(pv, method);
                [
                    img.image_id.clone(),
                    pv.scale_id.to_string(),
                    method.to_string(),
                    score.to_string(),
                    decision_field(classify(score, config.boundary)).to_string(),
                    pv.len().to_string(),
                    tile_variance(pv).to_string(),
                ]
            })
            .collect();
        for row in &rows {
            agg.write_record(row)?;
        }
        if let (Some(w), Some(weights)) = (combined.as_mut(), &config.weights) {
            let ids: Vec<u32> = img.scales.iter().map(|pv| pv.scale_id).collect();
            let expected: Vec<u32> = (1..=n_scales as u32).collect();
            if ids != expected {
                bail!(
                    "image {} has retained tiles at scales {ids:?}; weights need all of {expected:?}",
                    img.image_id
                );
            }
            let scores: Vec<f64> = img.scales.iter().map(|pv| aggregate(pv, method)).collect();
            let final_score = combine_scales(&scores, weights)?;
            for row in &rows {
                let mut full = row.to_vec();
                full.push(final_score.to_string());
                full.push(weights.to_string());
                w.write_record(full)?;
            }
        }
    }
    for id in missing_images(&by_image, n_scales) {
        warn!("image {id} has no retained tiles at some scale");
    }
    agg.flush()?;
    if let Some(mut w) = combined {
        w.flush()?;
    }
    Ok(scored.len())
}

fn predict(model: &ClassifierModel, img: Option<&SourceImage>, tile: &TileRecord) -> Result<f64> {
    match (model, img) {
        (ClassifierModel::External(probs), _) => Ok(probs.get(&tile.key())?),
        (ClassifierModel::Baseline(m), Some(img)) => Ok(m.predict_tile(img, tile)?),
        (ClassifierModel::Baseline(_), None) => bail!("baseline model needs image pixels"),
    }
}

fn missing_images(
    by_image: &BTreeMap<String, BTreeMap<u32, Vec<TileRecord>>>,
    n_scales: usize,
) -> Vec<&str> {
    by_image
        .iter()
        .filter(|(_, s)| s.len() < n_scales)
        .map(|(id, _)| id.as_str())
        .collect()
}
