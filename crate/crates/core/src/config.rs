//! Pipeline configuration and its flat `key = value` file form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::aggregator::{grid_resolution, Method, WeightVector, DEFAULT_BOUNDARY};
use crate::error::{Error, Result};
use crate::raster::ResolutionPolicy;
use crate::sifter::{Criterion, SiftPolicy, DEFAULT_BIN_WIDTH};

/// How tiles are chosen for training and prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Selection {
    /// Entropy-sifted grid tiles.
    #[default]
    Entropy,
    /// Uniformly random tile origins, as many as the entropy criterion keeps.
    Random,
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Selection::Entropy),
            "random" => Ok(Selection::Random),
            other => Err(Error::Config(format!("unknown selection {other:?}"))),
        }
    }
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Selection::Entropy => "entropy",
            Selection::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub target_resolution: f64,
    pub max_downscale_ratio: f64,
    pub allow_upsampling: bool,
    /// Square side, or base side of aspect-matched tiles; scale ids follow
    /// list order starting at 1.
    pub tile_sizes: Vec<usize>,
    pub overlap: f64,
    pub rectangular: bool,
    pub relax: f64,
    pub criterion: Criterion,
    pub selection: Selection,
    pub method: Method,
    pub boundary: f64,
    /// Fixed multi-scale weights; fitted on validation data when absent.
    pub weights: Option<WeightVector>,
    pub weight_step: f64,
    pub seed: u64,
    pub n_folds: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub bin_width: f64,
    pub image_manifest: Option<String>,
    pub out_dir: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            target_resolution: 25.0,
            max_downscale_ratio: 5.0,
            allow_upsampling: false,
            tile_sizes: vec![100],
            overlap: 0.5,
            rectangular: false,
            relax: 1.0,
            criterion: Criterion::High,
            selection: Selection::Entropy,
            method: Method::Average,
            boundary: DEFAULT_BOUNDARY,
            weights: None,
            weight_step: 0.01,
            seed: 0,
            n_folds: 4,
            epochs: 30,
            learning_rate: 0.5,
            bin_width: DEFAULT_BIN_WIDTH,
            image_manifest: None,
            out_dir: "out".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.resolution_policy()?;
        self.sift_policy()?;
        if self.tile_sizes.is_empty() || self.tile_sizes.contains(&0) {
            return Err(Error::Config("tile_sizes must list positive sizes".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!(
                "overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        if !(0.0..=1.0).contains(&self.boundary) {
            return Err(Error::Config(format!(
                "boundary must lie in [0, 1], got {}",
                self.boundary
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.tile_sizes.len() {
                return Err(Error::WeightMismatch {
                    weights: w.len(),
                    scales: self.tile_sizes.len(),
                });
            }
        }
        grid_resolution(self.weight_step)?;
        if self.n_folds < 2 {
            return Err(Error::TooFewFolds(self.n_folds));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidLearningRate(self.learning_rate));
        }
        if !(self.bin_width > 0.0 && self.bin_width <= 8.0) {
            return Err(Error::Config(format!(
                "bin_width must lie in (0, 8], got {}",
                self.bin_width
            )));
        }
        Ok(())
    }

    pub fn resolution_policy(&self) -> Result<ResolutionPolicy> {
        Ok(ResolutionPolicy::new(self.target_resolution)?
            .with_max_downscale_ratio(self.max_downscale_ratio)?
            .with_upsampling(self.allow_upsampling))
    }

    pub fn sift_policy(&self) -> Result<SiftPolicy> {
        Ok(SiftPolicy::new(self.relax)?.with_criterion(self.criterion))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    /// Every key on its own line, in a fixed order.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.tile_sizes.iter().map(|t| t.to_string()).collect();
        let criterion = match self.criterion {
            Criterion::High => "high",
            Criterion::Low => "low",
        };
        let _ = writeln!(s, "target_resolution = {}", self.target_resolution);
        let _ = writeln!(s, "max_downscale_ratio = {}", self.max_downscale_ratio);
        let _ = writeln!(s, "allow_upsampling = {}", self.allow_upsampling);
        let _ = writeln!(s, "tile_sizes = {}", sizes.join(","));
        let _ = writeln!(s, "overlap = {}", self.overlap);
        let _ = writeln!(s, "rectangular = {}", self.rectangular);
        let _ = writeln!(s, "relax = {}", self.relax);
        let _ = writeln!(s, "criterion = {criterion}");
        let _ = writeln!(s, "selection = {}", self.selection);
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "boundary = {}", self.boundary);
        let weights = self
            .weights
            .as_ref()
            .map(|w| w.to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "weights = {weights}");
        let _ = writeln!(s, "weight_step = {}", self.weight_step);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_folds = {}", self.n_folds);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "bin_width = {}", self.bin_width);
        let manifest = self.image_manifest.as_deref().unwrap_or_default();
        let _ = writeln!(s, "image_manifest = {manifest}");
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        s
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "target_resolution" => self.target_resolution = parse(key, value)?,
            "max_downscale_ratio" => self.max_downscale_ratio = parse(key, value)?,
            "allow_upsampling" => self.allow_upsampling = parse(key, value)?,
            "tile_sizes" => {
                self.tile_sizes = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "overlap" => self.overlap = parse(key, value)?,
            "rectangular" => self.rectangular = parse(key, value)?,
            "relax" => self.relax = parse(key, value)?,
            "criterion" => {
                self.criterion = match value {
                    "high" => Criterion::High,
                    "low" => Criterion::Low,
                    other => return Err(Error::Config(format!("unknown criterion {other:?}"))),
                }
            }
            "selection" => self.selection = value.parse()?,
            "method" => self.method = value.parse()?,
            "boundary" => self.boundary = parse(key, value)?,
            "weights" => {
                self.weights = if value.is_empty() {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            "weight_step" => self.weight_step = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "n_folds" => self.n_folds = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "bin_width" => self.bin_width = parse(key, value)?,
            "image_manifest" => {
                self.image_manifest = (!value.is_empty()).then(|| value.to_string())
            }
            "out_dir" => self.out_dir = value.to_string(),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl FromStr for PipelineConfig {
    type Err = Error;

    /// Missing keys keep their defaults; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {raw:?}",
                    lineno + 1
                ))
            })?;
            config
                .set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(config)
    }
}
