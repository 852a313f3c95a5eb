//! Per-tile binary classifiers.
//!
//! Two kinds plug into the pipeline: a logistic-regression baseline over
//! hand-built tile features, trained by full-batch gradient descent with a
//! checkpoint after every epoch, and an external model whose tile
//! probabilities arrive as a CSV manifest keyed by
//! `(image_id, scale_id, tile_index)`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entropy::{shannon_entropy, Histogram256, MAX_BITS};
use crate::error::{Error, Result};
use crate::raster::SourceImage;
use crate::tiler::{extract_tile, TileKey, TileRecord};

pub const HIST_BINS: usize = 32;
pub const FEATURE_DIM: usize = HIST_BINS + 3;

/// 32-bin normalized luminance histogram, then mean/255, stddev/255 and
/// entropy/8.
#[derive(Clone, Debug, PartialEq)]
pub struct TileFeatures(Vec<f64>);

impl TileFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn histogram(&self) -> &[f64] {
        &self.0[..HIST_BINS]
    }

    pub fn mean(&self) -> f64 {
        self.0[HIST_BINS]
    }

    pub fn stddev(&self) -> f64 {
        self.0[HIST_BINS + 1]
    }

    pub fn entropy(&self) -> f64 {
        self.0[HIST_BINS + 2]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn featurize(pixels: &[u8]) -> Result<TileFeatures> {
    if pixels.is_empty() {
        return Err(Error::EmptyInput("tile"));
    }
    let hist = Histogram256::from_values(pixels);
    let n = pixels.len() as f64;
    let mut features = vec![0.0; FEATURE_DIM];
    let mut sum = 0.0;
    for (value, &count) in hist.counts().iter().enumerate() {
        if count > 0 {
            features[value / 8] += count as f64;
            sum += value as f64 * count as f64;
        }
    }
    for bin in &mut features[..HIST_BINS] {
        *bin /= n;
    }
    let mean = sum / n;
    let var = hist
        .counts()
        .iter()
        .enumerate()
        .map(|(v, &c)| c as f64 * (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    features[HIST_BINS] = mean / 255.0;
    features[HIST_BINS + 1] = var.sqrt() / 255.0;
    features[HIST_BINS + 2] = shannon_entropy(&hist)?.bits() / MAX_BITS;
    Ok(TileFeatures(features))
}

pub fn featurize_tile(img: &SourceImage, tile: &TileRecord) -> Result<TileFeatures> {
    featurize(&extract_tile(img, tile)?.data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: bool,
}

/// Logistic-regression checkpoint; serialized as the baseline model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub version_id: String,
    pub seed: u64,
    pub epoch: usize,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticModel {
    pub fn zeros(dim: usize, seed: u64) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            version_id: "epoch-0".into(),
            seed,
            epoch: 0,
        }
    }

    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::FeatureDimension {
                expected: self.weights.len(),
                got: features.len(),
            });
        }
        Ok(self.bias + dot(&self.weights, features))
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.score(features)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean binary cross-entropy and its gradient `(d/dw, d/db)`.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    examples: &[LabeledExample],
) -> (f64, Vec<f64>, f64) {
    let n = examples.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for ex in examples {
        let z = bias + dot(weights, &ex.features);
        let y = if ex.label { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let residual = sigmoid(z) - y;
        for (g, x) in grad.iter_mut().zip(&ex.features) {
            *g += residual * x;
        }
        grad_b += residual;
    }
    for g in &mut grad {
        *g /= n;
    }
    (loss / n, grad, grad_b / n)
}

/// Initial model, one checkpoint per epoch, and the loss before each epoch
/// plus the final loss.
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub initial: LogisticModel,
    pub checkpoints: Vec<LogisticModel>,
    pub losses: Vec<f64>,
}

impl TrainingRun {
    pub fn final_model(&self) -> &LogisticModel {
        self.checkpoints.last().unwrap_or(&self.initial)
    }
}

/// Full-batch gradient descent on mean cross-entropy from zero weights.
///
/// Descent runs in standardized feature coordinates (zero mean, unit
/// variance over the training set); checkpoints store the equivalent
/// weights for raw features, so a checkpoint predicts on raw features.
pub fn train_baseline(
    examples: &[LabeledExample],
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<TrainingRun> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidLearningRate(learning_rate));
    }
    let first = examples.first().ok_or(Error::EmptyInput("training set"))?;
    if examples.iter().all(|e| e.label) || examples.iter().all(|e| !e.label) {
        return Err(Error::SingleClass);
    }
    let dim = first.features.len();
    if let Some(bad) = examples.iter().find(|e| e.features.len() != dim) {
        return Err(Error::FeatureDimension {
            expected: dim,
            got: bad.features.len(),
        });
    }

    let scaler = Standardizer::fit(examples, dim);
    let standardized: Vec<LabeledExample> = examples
        .iter()
        .map(|e| LabeledExample {
            features: scaler.apply(&e.features),
            label: e.label,
        })
        .collect();

    let initial = LogisticModel::zeros(dim, seed);
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut checkpoints = Vec::with_capacity(epochs);
    let mut losses = Vec::with_capacity(epochs + 1);
    for epoch in 1..=epochs {
        let (loss, grad, grad_b) = loss_and_gradient(&weights, bias, &standardized);
        losses.push(loss);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= learning_rate * g;
        }
        bias -= learning_rate * grad_b;
        let (raw_w, raw_b) = scaler.to_raw(&weights, bias);
        checkpoints.push(LogisticModel {
            weights: raw_w,
            bias: raw_b,
            version_id: format!("epoch-{epoch}"),
            seed,
            epoch,
        });
    }
    losses.push(loss_and_gradient(&weights, bias, &standardized).0);
    Ok(TrainingRun {
        initial,
        checkpoints,
        losses,
    })
}

/// Per-feature `(x - mean) / scale`; constant features keep scale 1.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(examples: &[LabeledExample], dim: usize) -> Self {
        let n = examples.len() as f64;
        let mut mean = vec![0.0; dim];
        for e in examples {
            for (m, x) in mean.iter_mut().zip(&e.features) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for e in examples {
            for ((v, x), m) in var.iter_mut().zip(&e.features).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn to_raw(&self, weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
        let raw: Vec<f64> = weights
            .iter()
            .zip(&self.scale)
            .map(|(w, s)| w / s)
            .collect();
        let shift: f64 = raw.iter().zip(&self.mean).map(|(w, m)| w * m).sum();
        (raw, bias - shift)
    }
}

/// Tile probabilities produced by a model outside this crate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExternalProbabilities {
    probs: BTreeMap<TileKey, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbabilityRow {
    image_id: String,
    scale_id: u32,
    tile_index: usize,
    prob: f64,
}

impl ExternalProbabilities {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: TileKey, prob: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::ProbabilityRange(prob));
        }
        self.probs.insert(key, prob);
        Ok(())
    }

    pub fn get(&self, key: &TileKey) -> Result<f64> {
        self.probs
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingProbability {
                image_id: key.image_id.clone(),
                scale_id: key.scale_id,
                tile_index: key.tile_index,
            })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TileKey, f64)> {
        self.probs.iter().map(|(k, &p)| (k, p))
    }

    /// Parses `image_id,scale_id,tile_index,prob`.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut out = Self::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize() {
            let row: ProbabilityRow = row?;
            out.insert(
                TileKey {
                    image_id: row.image_id,
                    scale_id: row.scale_id,
                    tile_index: row.tile_index,
                },
                row.prob,
            )?;
        }
        Ok(out)
    }

    /// Rows sorted by key; probabilities in shortest round-trip form.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (key, &prob) in &self.probs {
            wtr.serialize(ProbabilityRow {
                image_id: key.image_id.clone(),
                scale_id: key.scale_id,
                tile_index: key.tile_index,
                prob,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// A per-tile probability source.
pub trait TileClassifier {
    fn predict_tile(&self, img: &SourceImage, tile: &TileRecord) -> Result<f64>;
}

#[derive(Clone, Debug)]
pub enum ClassifierModel {
    Baseline(LogisticModel),
    External(ExternalProbabilities),
}

impl ClassifierModel {
    pub fn version_id(&self) -> &str {
        match self {
            ClassifierModel::Baseline(m) => &m.version_id,
            ClassifierModel::External(_) => "external",
        }
    }
}

impl TileClassifier for LogisticModel {
    fn predict_tile(&self, img: &SourceImage, tile: &TileRecord) -> Result<f64> {
        self.predict(featurize_tile(img, tile)?.as_slice())
    }
}

impl TileClassifier for ExternalProbabilities {
    fn predict_tile(&self, _img: &SourceImage, tile: &TileRecord) -> Result<f64> {
        self.get(&tile.key())
    }
}

impl TileClassifier for ClassifierModel {
    fn predict_tile(&self, img: &SourceImage, tile: &TileRecord) -> Result<f64> {
        match self {
            ClassifierModel::Baseline(m) => m.predict_tile(img, tile),
            ClassifierModel::External(p) => p.predict_tile(img, tile),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_black_tile_features() {
        let f = featurize(&[0; 64]).unwrap();
        assert_eq!(f.as_slice().len(), FEATURE_DIM);
        assert_eq!(f.histogram()[0], 1.0);
        assert!(f.histogram()[1..].iter().all(|&b| b == 0.0));
        assert_eq!((f.mean(), f.stddev(), f.entropy()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_value_tile_features() {
        let px: Vec<u8> = (0..100).map(|i| if i % 2 == 0 { 0 } else { 255 }).collect();
        let f = featurize(&px).unwrap();
        assert_eq!(f.histogram()[0], 0.5);
        assert_eq!(f.histogram()[31], 0.5);
        assert_eq!(f.mean(), 0.5);
        assert_eq!(f.stddev(), 0.5);
        assert_eq!(f.entropy(), 1.0 / 8.0);
    }

    #[test]
    fn empty_tile_is_error() {
        assert!(featurize(&[]).is_err());
    }

    #[test]
    fn zero_epochs_give_half_probability() {
        let ex = vec![
            LabeledExample {
                features: vec![1.0, 2.0],
                label: true,
            },
            LabeledExample {
                features: vec![-1.0, 0.5],
                label: false,
            },
        ];
        let run = train_baseline(&ex, 0, 0.1, 3).unwrap();
        assert!(run.checkpoints.is_empty());
        let m = run.final_model();
        assert_eq!(m.predict(&[5.0, -7.0]).unwrap(), 0.5);
        assert_eq!(m.seed, 3);
    }

    #[test]
    fn training_errors() {
        let one = vec![LabeledExample {
            features: vec![1.0],
            label: true,
        }];
        assert!(matches!(
            train_baseline(&one, 1, 0.1, 0),
            Err(Error::SingleClass)
        ));
        let two = vec![
            LabeledExample {
                features: vec![1.0],
                label: true,
            },
            LabeledExample {
                features: vec![0.0],
                label: false,
            },
        ];
        assert!(matches!(
            train_baseline(&two, 1, 0.0, 0),
            Err(Error::InvalidLearningRate(_))
        ));
        assert!(train_baseline(&two, 1, -1.0, 0).is_err());
        assert!(train_baseline(&[], 1, 0.1, 0).is_err());
    }

    #[test]
    fn checkpoints_are_labeled_by_epoch() {
        let ex = vec![
            LabeledExample {
                features: vec![1.0],
                label: true,
            },
            LabeledExample {
                features: vec![-1.0],
                label: false,
            },
        ];
        let run = train_baseline(&ex, 3, 0.5, 9).unwrap();
        let ids: Vec<_> = run
            .checkpoints
            .iter()
            .map(|c| c.version_id.as_str())
            .collect();
        assert_eq!(ids, ["epoch-1", "epoch-2", "epoch-3"]);
        assert_eq!(run.losses.len(), 4);
        assert!(run.final_model().predict(&[1.0]).unwrap() > 0.5);
    }

    #[test]
    fn sigmoid_is_monotone_and_bounded() {
        let zs = [-800.0, -30.0, -1.0, 0.0, 1e-9, 2.0, 40.0, 800.0];
        for w in zs.windows(2) {
            assert!(sigmoid(w[0]) <= sigmoid(w[1]));
        }
        assert!(zs.iter().all(|&z| (0.0..=1.0).contains(&sigmoid(z))));
    }

    #[test]
    fn external_lookup_and_missing_row() {
        let mut ext = ExternalProbabilities::new();
        let key = TileKey {
            image_id: "a".into(),
            scale_id: 1,
            tile_index: 4,
        };
        ext.insert(key.clone(), 0.85).unwrap();
        assert_eq!(ext.get(&key).unwrap(), 0.85);
        let missing = TileKey {
            tile_index: 5,
            ..key
        };
        let err = ext.get(&missing).unwrap_err().to_string();
        assert!(
            err.contains("image_id=a") && err.contains("tile_index=5"),
            "{err}"
        );
        assert!(ext.insert(missing, 1.5).is_err());
    }

    #[test]
    fn checkpoint_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = LogisticModel {
            weights: vec![0.1, -2.5e-7, 3.0],
            bias: -0.3,
            version_id: "epoch-4".into(),
            seed: 11,
            epoch: 4,
        };
        m.save(&path).unwrap();
        assert_eq!(LogisticModel::load(&path).unwrap(), m);
    }
}
