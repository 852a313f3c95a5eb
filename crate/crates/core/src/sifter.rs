//! Entropy-criterion tile selection.

use serde::{Deserialize, Serialize};

use crate::entropy::{Entropy, MAX_BITS};
use crate::error::{Error, Result};
use crate::tiler::TileRecord;

/// Which side of the threshold is kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Keep tiles at least as diverse as `relax` times the image.
    #[default]
    High,
    /// Inverted: keep tiles no more diverse than the image divided by `relax`.
    Low,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiftPolicy {
    relax: f64,
    pub criterion: Criterion,
}

impl Default for SiftPolicy {
    fn default() -> Self {
        Self {
            relax: 1.0,
            criterion: Criterion::High,
        }
    }
}

impl SiftPolicy {
    /// `relax` in `(0, 1]`; 1.0 is the strict criterion, 0.99 relaxes it by 1%.
    pub fn new(relax: f64) -> Result<Self> {
        if relax > 0.0 && relax <= 1.0 {
            Ok(Self {
                relax,
                criterion: Criterion::High,
            })
        } else {
            Err(Error::InvalidRelax(relax))
        }
    }

    pub fn with_criterion(mut self, criterion: Criterion) -> Self {
        self.criterion = criterion;
        self
    }

    pub fn relax(&self) -> f64 {
        self.relax
    }

    pub fn threshold(&self, image_entropy: Entropy) -> f64 {
        match self.criterion {
            Criterion::High => self.relax * image_entropy.bits(),
            Criterion::Low => image_entropy.bits() / self.relax,
        }
    }

    pub fn keeps(&self, tile_entropy: f64, threshold: f64) -> bool {
        match self.criterion {
            Criterion::High => tile_entropy >= threshold,
            Criterion::Low => tile_entropy <= threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiftResult {
    pub image_id: String,
    pub scale_id: u32,
    /// Tiles passing the criterion.
    pub retained_count: usize,
    /// Tiles in the grid.
    pub candidate_count: usize,
    pub threshold_bits: f64,
}

/// Marks each tile `retained` when it satisfies the policy against the
/// whole-image entropy. Ties with the threshold are retained.
pub fn sift(
    image_id: &str,
    scale_id: u32,
    tiles: &mut [TileRecord],
    image_entropy: Entropy,
    policy: &SiftPolicy,
) -> SiftResult {
    let threshold = policy.threshold(image_entropy);
    let mut retained = 0;
    for tile in tiles.iter_mut() {
        tile.retained = policy.keeps(tile.entropy, threshold);
        retained += tile.retained as usize;
    }
    SiftResult {
        image_id: image_id.to_string(),
        scale_id,
        retained_count: retained,
        candidate_count: tiles.len(),
        threshold_bits: threshold,
    }
}

pub fn retention_rate(result: &SiftResult) -> Result<f64> {
    if result.candidate_count == 0 {
        return Err(Error::EmptyInput("candidate tile set"));
    }
    Ok(result.retained_count as f64 / result.candidate_count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Histogram of tile entropies over `[0, 8]` bits.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyDistribution {
    pub bin_width: f64,
    pub bins: Vec<EntropyBin>,
    pub mean: f64,
    /// Whole-image entropy marker, when known.
    pub image_entropy: Option<f64>,
}

impl EntropyDistribution {
    pub fn occupied(&self) -> impl Iterator<Item = &EntropyBin> {
        self.bins.iter().filter(|b| b.count > 0)
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

pub fn entropy_distribution(
    entropies: &[f64],
    bin_width: f64,
    image_entropy: Option<f64>,
) -> Result<EntropyDistribution> {
    if entropies.is_empty() {
        return Err(Error::EmptyInput("tile entropy list"));
    }
    if !(bin_width > 0.0 && bin_width <= MAX_BITS) {
        return Err(Error::Config(format!(
            "bin width must lie in (0, 8], got {bin_width}"
        )));
    }
    let n_bins = (MAX_BITS / bin_width - 1e-9).ceil() as usize;
    let mut bins: Vec<EntropyBin> = (0..n_bins)
        .map(|i| EntropyBin {
            low: i as f64 * bin_width,
            high: ((i + 1) as f64 * bin_width).min(MAX_BITS),
            count: 0,
        })
        .collect();
    for &e in entropies {
        let i = ((e / bin_width).floor().max(0.0) as usize).min(n_bins - 1);
        bins[i].count += 1;
    }
    let mean = entropies.iter().sum::<f64>() / entropies.len() as f64;
    Ok(EntropyDistribution {
        bin_width,
        bins,
        mean,
        image_entropy,
    })
}

/// Convenience over [`entropy_distribution`] for tile records.
pub fn tile_entropy_distribution(
    tiles: &[TileRecord],
    bin_width: f64,
    image_entropy: Option<f64>,
) -> Result<EntropyDistribution> {
    let entropies: Vec<f64> = tiles.iter().map(|t| t.entropy).collect();
    entropy_distribution(&entropies, bin_width, image_entropy)
}
