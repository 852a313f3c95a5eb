use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use tilesift::classifier::ExternalProbabilities;
use tilesift::config::PipelineConfig;
use tilesift::error::Error;
use tilesift::evaluator::{
    cross_validate, prepare_image, ClassifierSource, EvalReport, PreparedImage,
};
use tilesift::sifter::entropy_distribution;

use super::out_dir;
use super::plot::{render, ACCURACY_HEADER, ENTROPY_HEADER, MARKER_PREFIX};
use crate::store::{load_store_image, read_store};

pub const EVAL_DIR: &str = "eval";
pub const REPORT_FILE: &str = "eval_report.csv";
pub const SUMMARY_FILE: &str = "eval_summary.txt";

/// Cross-validates on the labeled store and writes the report, summary,
/// per-fold accuracy curves, per-class entropy distributions and the
/// selected checkpoints under `<out_dir>/eval`. Returns the report and the
/// summary text.
pub fn run(config: &PipelineConfig, probs: Option<&Path>) -> Result<(EvalReport, String)> {
    let out = out_dir(config)?;
    let store = read_store(&out)?;
    for row in &store {
        if row.label()?.is_none() {
            return Err(Error::Unlabeled(row.image_id.clone()).into());
        }
    }
    let data: Vec<PreparedImage> = store
        .par_iter()
        .map(|row| {
            let img = load_store_image(&out, row)?;
            Ok(prepare_image(&img, config)?)
        })
        .collect::<Result<_>>()?;
    let source = match probs {
        Some(path) => ClassifierSource::External(
            ExternalProbabilities::load(path)
                .with_context(|| format!("loading probabilities {}", path.display()))?,
        ),
        None => ClassifierSource::baseline(config),
    };
    let report = cross_validate(&data, config, &source)?;

    let dir = out.join(EVAL_DIR);
    std::fs::create_dir_all(dir.join("checkpoints"))?;
    write_report(&dir.join(REPORT_FILE), &report)?;
    let summary = summary_text(config, &data, &report);
    std::fs::write(dir.join(SUMMARY_FILE), &summary)?;

    for fold in &report.folds {
        for scale in &fold.scales {
            let Some(model) = &scale.checkpoint else {
                continue;
            };
            let stem = format!("accuracy_fold{}_scale{}", fold.fold + 1, scale.scale_id);
            let mut csv = ACCURACY_HEADER.join(",") + "\n";
            for (epoch, acc) in scale.test_accuracy_by_epoch.iter().enumerate() {
                let _ = writeln!(csv, "{},{acc}", epoch + 1);
            }
            write_csv_and_svg(&dir, &stem, &csv)?;
            let ckpt = dir.join("checkpoints").join(format!(
                "fold{}_scale{}.json",
                fold.fold + 1,
                scale.scale_id
            ));
            model.save(ckpt)?;
        }
    }

    for (label, name) in [(true, "positive"), (false, "negative")] {
        let class: Vec<&PreparedImage> = data.iter().filter(|d| d.label == label).collect();
        let entropies: Vec<f64> = class
            .iter()
            .flat_map(|d| {
                d.tiles
                    .scales
                    .iter()
                    .flat_map(|s| s.tiles.iter().map(|t| t.entropy))
            })
            .collect();
        if entropies.is_empty() {
            continue;
        }
        let marker = class
            .iter()
            .map(|d| d.tiles.image_entropy.bits())
            .sum::<f64>()
            / class.len() as f64;
        let dist = entropy_distribution(&entropies, config.bin_width, Some(marker))?;
        let mut csv = format!("{MARKER_PREFIX}{marker}\n{}\n", ENTROPY_HEADER.join(","));
        for b in &dist.bins {
            let _ = writeln!(csv, "{},{},{}", b.low, b.high, b.count);
        }
        write_csv_and_svg(&dir, &format!("entropy_{name}"), &csv)?;
    }
    Ok((report, summary))
}

fn write_csv_and_svg(dir: &Path, stem: &str, csv: &str) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.csv")), csv)?;
    std::fs::write(dir.join(format!("{stem}.svg")), render(csv, stem)?)?;
    Ok(())
}

fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "fold",
        "test_images",
        "correct",
        "accuracy",
        "misclassified",
        "error",
        "mean_variance",
        "weights",
        "train_tiles",
        "checkpoints",
    ])?;
    for fold in &report.folds {
        let weights = fold
            .weights
            .as_ref()
            .map(|w| w.to_string())
            .unwrap_or_default();
        let checkpoints: Vec<&str> = fold.scales.iter().map(|s| s.version_id()).collect();
        let train: usize = fold.scales.iter().map(|s| s.train_tiles).sum();
        w.write_record([
            (fold.fold + 1).to_string(),
            fold.scores.len().to_string(),
            (fold.scores.len() - fold.report.n_misclassified()).to_string(),
            fold.report.accuracy.to_string(),
            fold.report.n_misclassified().to_string(),
            fold.report.error.to_string(),
            fold.mean_variance.to_string(),
            weights,
            train.to_string(),
            checkpoints.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table: tile size, average tiles per image, tiles per fold
/// and the cross-validation accuracy range.
fn summary_text(config: &PipelineConfig, data: &[PreparedImage], report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>16} {:>28} {:>22}",
        "tile size", "avg tiles/image", "tiles/fold", "cross-validation range"
    );
    for (i, &side) in config.tile_sizes.iter().enumerate() {
        let avg =
            data.iter().map(|d| d.features[i].len()).sum::<usize>() as f64 / data.len() as f64;
        let per_fold: Vec<String> = report
            .folds
            .iter()
            .map(|f| f.scales[i].train_tiles.to_string())
            .collect();
        let range = if i == 0 {
            format!("{:.4}-{:.4}", report.accuracy_min, report.accuracy_max)
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            "{:<12} {avg:>16.2} {:>28} {range:>22}",
            side,
            per_fold.join("/")
        );
    }
    let _ = writeln!(s);
    for (i, acc) in report.fold_accuracies().iter().enumerate() {
        let _ = writeln!(s, "fold {} accuracy: {acc:.4}", i + 1);
    }
    let _ = writeln!(
        s,
        "accuracy range: {:.4}-{:.4}",
        report.accuracy_min, report.accuracy_max
    );
    let _ = writeln!(s, "overall accuracy: {:.4}", report.overall_accuracy);
    let _ = writeln!(s, "mean tile variance: {:.6}", report.mean_variance);
    let _ = writeln!(
        s,
        "folds: {}, seed: {}, method: {}, selection: {}, images: {}",
        report.plan.n_folds,
        report.plan.seed,
        config.method,
        config.selection,
        data.len()
    );
    s
}
