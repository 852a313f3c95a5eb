use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("image has zero size ({width}x{height})")]
    EmptyImage { width: usize, height: usize },

    #[error("pixel buffer holds {got} values, expected {expected}")]
    PixelCount { expected: usize, got: usize },

    #[error("resolution must be positive, got {0} px/cm")]
    InvalidResolution(f64),

    #[error("resampling {width}x{height} to {target} px/cm would produce a zero-sized image")]
    DegenerateResample {
        width: usize,
        height: usize,
        target: f64,
    },

    #[error("region {w}x{h}@({x},{y}) is empty or outside the {width}x{height} image")]
    InvalidRegion {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("entropy of an empty histogram is undefined")]
    EmptyHistogram,

    #[error("invalid tile scale: {0}")]
    InvalidScale(String),

    #[error("tile {tile_w}x{tile_h} does not fit in a {width}x{height} image")]
    TileExceedsImage {
        tile_w: usize,
        tile_h: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid sift policy: relax must lie in (0, 1], got {0}")]
    InvalidRelax(f64),

    #[error("{0} is empty")]
    EmptyInput(&'static str),

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),

    #[error("feature vector has {got} values, model expects {expected}")]
    FeatureDimension { expected: usize, got: usize },

    #[error("no probability for tile (image_id={image_id}, scale_id={scale_id}, tile_index={tile_index})")]
    MissingProbability {
        image_id: String,
        scale_id: u32,
        tile_index: usize,
    },

    #[error("probability {0} lies outside [0, 1]")]
    ProbabilityRange(f64),

    #[error("{weights} weights supplied for {scales} scales")]
    WeightMismatch { weights: usize, scales: usize },

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("class {label} has {count} images, need at least {n_folds} for {n_folds}-fold cross-validation")]
    TooFewImages {
        label: bool,
        count: usize,
        n_folds: usize,
    },

    #[error("cross-validation needs at least 2 folds, got {0}")]
    TooFewFolds(usize),

    #[error("image {0} has no label")]
    Unlabeled(String),

    #[error("duplicate image id {0}")]
    DuplicateImage(String),

    #[error("invalid synthetic dataset parameters: {0}")]
    InvalidSynthetic(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
