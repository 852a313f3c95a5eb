//! Per-image tiling and sifting across all configured scales.

use crate::config::{PipelineConfig, Selection};
use crate::entropy::{image_entropy, shannon_entropy, tile_entropies, Entropy, Histogram256};
use crate::error::Result;
use crate::raster::SourceImage;
use crate::sifter::{sift, SiftResult};
use crate::tiler::{generate_grid, random_tile_sample, rectangular_scale, TileRecord, TileScale};

#[derive(Clone, Debug)]
pub struct ScaleTiles {
    pub scale: TileScale,
    /// Grid tiles, or the random sample under [`Selection::Random`].
    pub tiles: Vec<TileRecord>,
    pub sift: SiftResult,
    /// Set when nothing met the criterion and the most diverse tile was kept.
    pub fallback: bool,
}

impl ScaleTiles {
    pub fn retained(&self) -> impl Iterator<Item = &TileRecord> {
        self.tiles.iter().filter(|t| t.retained)
    }

    pub fn retained_count(&self) -> usize {
        self.retained().count()
    }
}

#[derive(Clone, Debug)]
pub struct ImageTiles {
    pub image_id: String,
    pub image_entropy: Entropy,
    pub scales: Vec<ScaleTiles>,
}

/// Tile scales for `img`; scale ids are 1-based positions in `tile_sizes`.
pub fn scales_for(img: &SourceImage, config: &PipelineConfig) -> Result<Vec<TileScale>> {
    config
        .tile_sizes
        .iter()
        .enumerate()
        .map(|(i, &side)| {
            let id = i as u32 + 1;
            if config.rectangular {
                rectangular_scale(img, id, side, config.overlap)
            } else {
                TileScale::square(id, side, config.overlap)
            }
        })
        .collect()
}

/// Grids, entropies and sift flags for every configured scale.
///
/// When a nonempty grid has no tile meeting the criterion, its highest
/// entropy tile (earliest on ties) is kept so the image can still be scored.
/// Under random selection the grid only fixes how many tiles to draw.
pub fn tile_and_sift(img: &SourceImage, config: &PipelineConfig) -> Result<ImageTiles> {
    let policy = config.sift_policy()?;
    let whole = image_entropy(img)?;
    let mut scales = Vec::new();
    for scale in scales_for(img, config)? {
        let grid = generate_grid(img, scale);
        let mut tiles = grid.records(&img.image_id);
        for (i, e) in tile_entropies(img, &grid)? {
            tiles[i].entropy = e.bits();
        }
        let sift_result = sift(&img.image_id, scale.scale_id, &mut tiles, whole, &policy);
        let mut fallback = false;
        if sift_result.retained_count == 0 && !tiles.is_empty() {
            let best = tiles.iter().enumerate().fold(0, |best, (i, t)| {
                if t.entropy > tiles[best].entropy {
                    i
                } else {
                    best
                }
            });
            tiles[best].retained = true;
            fallback = true;
        }

        if config.selection == Selection::Random && !tiles.is_empty() {
            let n = tiles.iter().filter(|t| t.retained).count().max(1);
            let seed = tile_seed(config.seed, &img.image_id, scale.scale_id);
            tiles = random_tile_sample(img, scale, n, seed)?;
            for t in &mut tiles {
                let hist = Histogram256::from_region(img, t.x, t.y, t.w, t.h)?;
                t.entropy = shannon_entropy(&hist)?.bits();
                t.retained = true;
            }
        }
        scales.push(ScaleTiles {
            scale,
            tiles,
            sift: sift_result,
            fallback,
        });
    }
    Ok(ImageTiles {
        image_id: img.image_id.clone(),
        image_entropy: whole,
        scales,
    })
}

/// Stable per-(image, scale) seed: FNV-1a over the id, mixed with the run
/// seed and scale id.
pub fn tile_seed(seed: u64, image_id: &str, scale_id: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17) ^ (scale_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
