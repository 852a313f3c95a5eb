//! Painting-level cross-validation, checkpoint selection and a synthetic
//! dataset with a known entropy/class structure.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregator::{
    aggregate, aggregate_image, classification_error, classify, mean_variance, optimize_weights,
    AggregationResult, ErrorReport, LabeledScore, Method, ProbabilityVector, ScaleScores,
    WeightVector,
};
use crate::classifier::{
    featurize_tile, train_baseline, ExternalProbabilities, LabeledExample, LogisticModel,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{tile_and_sift, ImageTiles};
use crate::raster::SourceImage;
use crate::tiler::TileKey;

/// Assignment of whole images to cross-validation folds.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, image_id: &str) -> Option<usize> {
        self.assignments.get(image_id).copied()
    }

    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn assignments(&self) -> &BTreeMap<String, usize> {
        &self.assignments
    }

    /// Images used for checkpoint selection and weight fitting when testing
    /// on `fold`: the next fold, or the training images when there are only
    /// two folds.
    pub fn validation_fold(&self, fold: usize) -> Option<usize> {
        (self.n_folds >= 3).then(|| (fold + 1) % self.n_folds)
    }
}

/// Stratified, seeded assignment. Each class is shuffled and dealt
/// round-robin, continuing from where the previous class stopped, so fold
/// sizes differ by at most one overall and within each class.
pub fn plan_folds(images: &[(String, bool)], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::TooFewFolds(n_folds));
    }
    let mut seen = BTreeSet::new();
    for (id, _) in images {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateImage(id.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut next = 0;
    for label in [true, false] {
        let mut ids: Vec<&str> = images
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(id, _)| id.as_str())
            .collect();
        if ids.len() < n_folds {
            return Err(Error::TooFewImages {
                label,
                count: ids.len(),
                n_folds,
            });
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids {
            assignments.insert(id.to_string(), next);
            next = (next + 1) % n_folds;
        }
    }
    Ok(FoldPlan {
        n_folds,
        seed,
        assignments,
    })
}

/// An image after tiling and sifting, with features of its retained tiles.
#[derive(Clone, Debug)]
pub struct PreparedImage {
    pub image_id: String,
    pub label: bool,
    pub tiles: ImageTiles,
    /// Per scale, `(key, features)` of each retained tile.
    pub features: Vec<Vec<(TileKey, Vec<f64>)>>,
}

impl PreparedImage {
    pub fn retained_tiles(&self) -> usize {
        self.features.iter().map(Vec::len).sum()
    }
}

pub fn prepare_image(img: &SourceImage, config: &PipelineConfig) -> Result<PreparedImage> {
    let label = img
        .label
        .ok_or_else(|| Error::Unlabeled(img.image_id.clone()))?;
    let tiles = tile_and_sift(img, config)?;
    let features = tiles
        .scales
        .iter()
        .map(|s| {
            s.retained()
                .map(|t| Ok((t.key(), featurize_tile(img, t)?.into_vec())))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedImage {
        image_id: img.image_id.clone(),
        label,
        tiles,
        features,
    })
}

pub fn prepare_dataset(
    images: &[SourceImage],
    config: &PipelineConfig,
) -> Result<Vec<PreparedImage>> {
    images
        .iter()
        .map(|img| prepare_image(img, config))
        .collect()
}

/// Where tile probabilities come from.
#[derive(Clone, Debug)]
pub enum ClassifierSource {
    /// Train the logistic baseline on each fold's training images.
    Baseline {
        epochs: usize,
        learning_rate: f64,
    },
    External(ExternalProbabilities),
}

impl ClassifierSource {
    pub fn baseline(config: &PipelineConfig) -> Self {
        ClassifierSource::Baseline {
            epochs: config.epochs,
            learning_rate: config.learning_rate,
        }
    }
}

/// Retained-tile features of one image at one scale.
#[derive(Clone, Debug)]
pub struct ValidationImage {
    pub image_id: String,
    pub label: bool,
    pub tiles: Vec<Vec<f64>>,
}

fn image_score(model: &LogisticModel, img: &ValidationImage, method: Method) -> Result<f64> {
    let probs = img
        .tiles
        .iter()
        .map(|f| model.predict(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(
        &ProbabilityVector::new(&img.image_id, 0, probs)?,
        method,
    ))
}

/// Image-level (never tile-level) accuracy of `model`.
pub fn image_accuracy(
    model: &LogisticModel,
    images: &[ValidationImage],
    method: Method,
    boundary: f64,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let mut correct = 0;
    for img in images {
        if classify(image_score(model, img, method)?, boundary) == img.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / images.len() as f64)
}

/// Index of the first maximum.
pub fn pick_best(scores: &[f64]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &s)| match best {
            Some((_, b)) if s <= b => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointChoice {
    pub index: usize,
    pub version_id: String,
    /// Image-level validation accuracy of every checkpoint, in order.
    pub accuracies: Vec<f64>,
}

/// Picks the checkpoint with the best image-level accuracy; the earliest
/// wins ties.
pub fn select_checkpoint(
    checkpoints: &[LogisticModel],
    validation: &[ValidationImage],
    method: Method,
    boundary: f64,
) -> Result<CheckpointChoice> {
    if checkpoints.is_empty() {
        return Err(Error::EmptyInput("checkpoint list"));
    }
    let accuracies = checkpoints
        .iter()
        .map(|m| image_accuracy(m, validation, method, boundary))
        .collect::<Result<Vec<_>>>()?;
    let index = pick_best(&accuracies).expect("nonempty");
    Ok(CheckpointChoice {
        index,
        version_id: checkpoints[index].version_id.clone(),
        accuracies,
    })
}

#[derive(Clone, Debug)]
pub struct ScaleFoldOutcome {
    pub scale_id: u32,
    /// Selected checkpoint, `None` for external probabilities.
    pub checkpoint: Option<LogisticModel>,
    pub validation_accuracy_by_epoch: Vec<f64>,
    pub test_accuracy_by_epoch: Vec<f64>,
    pub train_tiles: usize,
    pub test_tiles: usize,
}

impl ScaleFoldOutcome {
    pub fn version_id(&self) -> &str {
        self.checkpoint
            .as_ref()
            .map(|c| c.version_id.as_str())
            .unwrap_or("external")
    }
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub results: Vec<AggregationResult>,
    pub scores: Vec<LabeledScore>,
    pub report: ErrorReport,
    pub weights: Option<WeightVector>,
    pub scales: Vec<ScaleFoldOutcome>,
    pub mean_variance: f64,
    pub training_images: BTreeSet<String>,
    pub validation_images: BTreeSet<String>,
    pub test_images: BTreeSet<String>,
    /// Every tile that entered training, for leakage audits.
    pub training_tiles: Vec<TileKey>,
}

fn scale_view(img: &PreparedImage, scale: usize) -> Result<ValidationImage> {
    let tiles: Vec<Vec<f64>> = img.features[scale].iter().map(|(_, f)| f.clone()).collect();
    if tiles.is_empty() {
        let s = &img.tiles.scales[scale].scale;
        return Err(Error::InvalidScale(format!(
            "image {} has no tiles at scale {} ({}x{})",
            img.image_id, s.scale_id, s.tile_w, s.tile_h
        )));
    }
    Ok(ValidationImage {
        image_id: img.image_id.clone(),
        label: img.label,
        tiles,
    })
}

fn external_scores(
    probs: &ExternalProbabilities,
    img: &PreparedImage,
    scale: usize,
    method: Method,
) -> Result<f64> {
    let view = scale_view(img, scale)?;
    let p = img.features[scale]
        .iter()
        .map(|(k, _)| probs.get(k))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(
        &ProbabilityVector::new(view.image_id, 0, p)?,
        method,
    ))
}

/// Trains (or loads probabilities) on the training images, then scores,
/// aggregates and classifies the images of `fold`.
pub fn run_fold(
    plan: &FoldPlan,
    fold: usize,
    data: &[PreparedImage],
    config: &PipelineConfig,
    source: &ClassifierSource,
) -> Result<FoldOutcome> {
    let val_fold = plan.validation_fold(fold);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for img in data {
        let f = plan.fold_of(&img.image_id).ok_or_else(|| {
            Error::Config(format!("image {} is not in the fold plan", img.image_id))
        })?;
        if f == fold {
            test.push(img);
        } else if Some(f) == val_fold {
            validation.push(img);
        } else {
            train.push(img);
        }
    }
    if val_fold.is_none() {
        validation = train.clone();
    }
    if test.is_empty() {
        return Err(Error::EmptyInput("test fold"));
    }
    if test.iter().all(|i| i.label) || test.iter().all(|i| !i.label) {
        return Err(Error::SingleClass);
    }

    let n_scales = data.first().map(|d| d.features.len()).unwrap_or(0);
    let method = config.method;
    let boundary = config.boundary;
    let mut training_tiles = Vec::new();
    let mut scales = Vec::with_capacity(n_scales);
    // per scale: scores of validation and test images
    let mut val_scores: Vec<Vec<f64>> = vec![Vec::new(); validation.len()];
    let mut test_scores: Vec<Vec<ProbabilityVector>> = vec![Vec::new(); test.len()];

    for s in 0..n_scales {
        let scale_id = test[0].tiles.scales[s].scale.scale_id;
        let test_views = test
            .iter()
            .map(|i| scale_view(i, s))
            .collect::<Result<Vec<_>>>()?;
        let train_tiles: usize = train.iter().map(|i| i.features[s].len()).sum();
        let test_tiles: usize = test_views.iter().map(|v| v.tiles.len()).sum();
        match source {
            ClassifierSource::Baseline {
                epochs,
                learning_rate,
            } => {
                let mut examples = Vec::with_capacity(train_tiles);
                for img in &train {
                    for (key, f) in &img.features[s] {
                        training_tiles.push(key.clone());
                        examples.push(LabeledExample {
                            features: f.clone(),
                            label: img.label,
                        });
                    }
                }
                let run = train_baseline(&examples, *epochs, *learning_rate, config.seed)?;
                let checkpoints = if run.checkpoints.is_empty() {
                    vec![run.initial.clone()]
                } else {
                    run.checkpoints.clone()
                };
                let val_views = validation
                    .iter()
                    .map(|i| scale_view(i, s))
                    .collect::<Result<Vec<_>>>()?;
                let choice = select_checkpoint(&checkpoints, &val_views, method, boundary)?;
                let test_curve = checkpoints
                    .iter()
                    .map(|m| image_accuracy(m, &test_views, method, boundary))
                    .collect::<Result<Vec<_>>>()?;
                let model = checkpoints[choice.index].clone();
                for (i, v) in val_views.iter().enumerate() {
                    val_scores[i].push(image_score(&model, v, method)?);
                }
                for (i, v) in test_views.iter().enumerate() {
                    let probs = v
                        .tiles
                        .iter()
                        .map(|f| model.predict(f))
                        .collect::<Result<_>>()?;
                    test_scores[i].push(ProbabilityVector::new(&v.image_id, scale_id, probs)?);
                }
                scales.push(ScaleFoldOutcome {
                    scale_id,
                    checkpoint: Some(model),
                    validation_accuracy_by_epoch: choice.accuracies,
                    test_accuracy_by_epoch: test_curve,
                    train_tiles,
                    test_tiles,
                });
            }
            ClassifierSource::External(probs) => {
                for (i, img) in validation.iter().enumerate() {
                    val_scores[i].push(external_scores(probs, img, s, method)?);
                }
                for (i, img) in test.iter().enumerate() {
                    let p = img.features[s]
                        .iter()
                        .map(|(k, _)| probs.get(k))
                        .collect::<Result<Vec<_>>>()?;
                    test_scores[i].push(ProbabilityVector::new(&img.image_id, scale_id, p)?);
                }
                scales.push(ScaleFoldOutcome {
                    scale_id,
                    checkpoint: None,
                    validation_accuracy_by_epoch: Vec::new(),
                    test_accuracy_by_epoch: Vec::new(),
                    train_tiles: 0,
                    test_tiles,
                });
            }
        }
    }

    let weights = if n_scales > 1 {
        Some(match &config.weights {
            Some(w) => w.clone(),
            None => {
                let val: Vec<ScaleScores> = validation
                    .iter()
                    .zip(&val_scores)
                    .map(|(img, scores)| ScaleScores {
                        image_id: img.image_id.clone(),
                        label: img.label,
                        scores: scores.clone(),
                    })
                    .collect();
                optimize_weights(&val, config.weight_step, boundary)?
            }
        })
    } else {
        None
    };

    let mut results = Vec::with_capacity(test.len());
    let mut scores = Vec::with_capacity(test.len());
    for (img, vectors) in test.iter().zip(&test_scores) {
        let r = aggregate_image(vectors, method, weights.as_ref(), boundary)?;
        scores.push(LabeledScore {
            image_id: img.image_id.clone(),
            label: img.label,
            score: r.final_score,
        });
        results.push(r);
    }
    let report = classification_error(&scores, boundary)?;
    let variances: Vec<f64> = results.iter().map(|r| r.tile_variance).collect();

    let outcome = FoldOutcome {
        fold,
        mean_variance: mean_variance(&variances)?,
        results,
        scores,
        report,
        weights,
        scales,
        training_images: train.iter().map(|i| i.image_id.clone()).collect(),
        validation_images: validation.iter().map(|i| i.image_id.clone()).collect(),
        test_images: test.iter().map(|i| i.image_id.clone()).collect(),
        training_tiles,
    };
    debug_assert!(outcome.training_images.is_disjoint(&outcome.test_images));
    Ok(outcome)
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    /// Correct decisions over all folds divided by the number of images.
    pub overall_accuracy: f64,
    pub accuracy_min: f64,
    pub accuracy_max: f64,
    /// Average over folds of the mean tile-probability variance.
    pub mean_variance: f64,
    /// Average retained tiles per image, summed over scales.
    pub avg_tiles_per_image: f64,
}

impl EvalReport {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.report.accuracy).collect()
    }

    /// Tiles that entered training, per fold.
    pub fn tiles_per_fold(&self) -> Vec<usize> {
        self.folds
            .iter()
            .map(|f| f.scales.iter().map(|s| s.train_tiles).sum())
            .collect()
    }
}

pub fn cross_validate(
    data: &[PreparedImage],
    config: &PipelineConfig,
    source: &ClassifierSource,
) -> Result<EvalReport> {
    config.validate()?;
    let labels: Vec<(String, bool)> = data.iter().map(|d| (d.image_id.clone(), d.label)).collect();
    let plan = plan_folds(&labels, config.n_folds, config.seed)?;
    let folds = (0..plan.n_folds)
        .map(|f| run_fold(&plan, f, data, config, source))
        .collect::<Result<Vec<_>>>()?;

    let accuracies: Vec<f64> = folds.iter().map(|f| f.report.accuracy).collect();
    let correct: usize = folds
        .iter()
        .map(|f| f.scores.len() - f.report.n_misclassified())
        .sum();
    let mean_var = mean_variance(&folds.iter().map(|f| f.mean_variance).collect::<Vec<_>>())?;
    let avg_tiles = data.iter().map(|d| d.retained_tiles() as f64).sum::<f64>() / data.len() as f64;
    Ok(EvalReport {
        overall_accuracy: correct as f64 / data.len() as f64,
        accuracy_min: accuracies.iter().copied().fold(f64::INFINITY, f64::min),
        accuracy_max: accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_variance: mean_var,
        avg_tiles_per_image: avg_tiles,
        plan,
        folds,
    })
}

/// Parameters of the two-class synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub images_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Inclusive range of textured patches per image.
    pub patches: (usize, usize),
    /// Patch side as a fraction of the shorter image side, inclusive range.
    pub patch_fraction: (f64, f64),
    pub resolution: f64,
}

impl SyntheticSpec {
    pub fn new(images_per_class: usize, width: usize, height: usize, seed: u64) -> Self {
        Self {
            images_per_class,
            width,
            height,
            seed,
            patches: (1, 2),
            patch_fraction: (0.12, 0.25),
            resolution: 25.0,
        }
    }
}

const JITTER: i32 = 20;

/// Class-true texture: 2-px checkerboard in tones 70/190.
fn checker_value(x: usize, y: usize) -> i32 {
    if (x / 2 + y / 2).is_multiple_of(2) {
        70
    } else {
        190
    }
}

/// Class-false texture: diagonal stripes, period 6, in tones 95/165.
fn stripe_value(x: usize, y: usize) -> i32 {
    if ((x + y) / 3).is_multiple_of(2) {
        95
    } else {
        165
    }
}

/// Labeled images whose only class signal lives in textured high-entropy
/// patches on a near-flat background shared by both classes.
///
/// Positives (`label = true`) carry checkerboard patches, negatives carry
/// diagonal stripes. Ids are `pos-NNN` / `neg-NNN`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SourceImage>> {
    let short = spec.width.min(spec.height);
    let (pmin, pmax) = spec.patches;
    let (fmin, fmax) = spec.patch_fraction;
    if spec.images_per_class == 0 || short < 8 || pmin == 0 || pmin > pmax {
        return Err(Error::InvalidSynthetic(format!("{spec:?}")));
    }
    if !(0.0 < fmin && fmin <= fmax && fmax <= 1.0) || (fmin * short as f64) < 2.0 {
        return Err(Error::InvalidSynthetic(format!(
            "patch fraction {fmin}..{fmax} of {short}px"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(2 * spec.images_per_class);
    for label in [true, false] {
        for i in 0..spec.images_per_class {
            let id = format!("{}-{i:03}", if label { "pos" } else { "neg" });
            out.push(synthetic_image(&mut rng, spec, id, label)?);
        }
    }
    Ok(out)
}

fn synthetic_image(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    id: String,
    label: bool,
) -> Result<SourceImage> {
    let (w, h) = (spec.width, spec.height);
    let short = w.min(h) as f64;
    let base: i32 = rng.gen_range(100..=140);
    let mut px: Vec<u8> = (0..w * h)
        .map(|_| {
            let r: f64 = rng.gen();
            let v = if r < 0.1 {
                base - 1
            } else if r < 0.9 {
                base
            } else {
                base + 1
            };
            v as u8
        })
        .collect();
    let n_patches = rng.gen_range(spec.patches.0..=spec.patches.1);
    for _ in 0..n_patches {
        let side =
            (rng.gen_range(spec.patch_fraction.0..=spec.patch_fraction.1) * short).round() as usize;
        let side = side.clamp(2, w.min(h));
        let px0 = rng.gen_range(0..=w - side);
        let py0 = rng.gen_range(0..=h - side);
        for y in py0..py0 + side {
            for x in px0..px0 + side {
                let tone = if label {
                    checker_value(x, y)
                } else {
                    stripe_value(x, y)
                };
                let v = tone + rng.gen_range(-JITTER..=JITTER);
                px[y * w + x] = v.clamp(0, 255) as u8;
            }
        }
    }
    SourceImage::from_pixels(id, w, h, px, spec.resolution, Some(label))
}
