//! Overlapping tile grids at multiple scales and a seeded random-tile sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::SourceImage;

/// One tile size in the multi-scale sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileScale {
    pub scale_id: u32,
    pub tile_w: usize,
    pub tile_h: usize,
    /// Fraction of tile extent shared by neighbours, in `[0, 1)`.
    pub overlap: f64,
}

impl TileScale {
    pub fn new(scale_id: u32, tile_w: usize, tile_h: usize, overlap: f64) -> Result<Self> {
        if tile_w == 0 || tile_h == 0 {
            return Err(Error::InvalidScale(format!(
                "tile dimensions must be positive, got {tile_w}x{tile_h}"
            )));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidScale(format!(
                "overlap must lie in [0, 1), got {overlap}"
            )));
        }
        Ok(Self {
            scale_id,
            tile_w,
            tile_h,
            overlap,
        })
    }

    pub fn square(scale_id: u32, side: usize, overlap: f64) -> Result<Self> {
        Self::new(scale_id, side, side, overlap)
    }

    pub fn stride_x(&self) -> usize {
        stride(self.tile_w, self.overlap)
    }

    pub fn stride_y(&self) -> usize {
        stride(self.tile_h, self.overlap)
    }
}

/// `max(1, round(tile * (1 - overlap)))`.
pub fn stride(tile: usize, overlap: f64) -> usize {
    ((tile as f64 * (1.0 - overlap)).round() as usize).max(1)
}

/// Tile origins along one axis: every multiple of `stride` that fits, plus a
/// flush-to-edge origin when the lattice leaves a trailing margin.
pub fn axis_origins(dim: usize, tile: usize, stride: usize) -> Vec<usize> {
    if tile > dim {
        return Vec::new();
    }
    let last = dim - tile;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    origins
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid {
    pub scale: TileScale,
    /// `(x, y)` offsets in row-major order.
    pub origins: Vec<(usize, usize)>,
}

impl TileGrid {
    pub fn for_dimensions(width: usize, height: usize, scale: TileScale) -> Self {
        let xs = axis_origins(width, scale.tile_w, scale.stride_x());
        let ys = axis_origins(height, scale.tile_h, scale.stride_y());
        let origins = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect();
        Self { scale, origins }
    }

    pub fn count(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Tile records in grid order with entropy unset and nothing retained.
    pub fn records(&self, image_id: &str) -> Vec<TileRecord> {
        self.origins
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| TileRecord {
                image_id: image_id.to_string(),
                scale_id: self.scale.scale_id,
                tile_index: i,
                x,
                y,
                w: self.scale.tile_w,
                h: self.scale.tile_h,
                entropy: 0.0,
                retained: false,
            })
            .collect()
    }
}

pub fn generate_grid(img: &SourceImage, scale: TileScale) -> TileGrid {
    TileGrid::for_dimensions(img.width(), img.height(), scale)
}

/// One row of the tile manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub image_id: String,
    pub scale_id: u32,
    pub tile_index: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    /// Bits, filled in by the entropy pass.
    pub entropy: f64,
    pub retained: bool,
}

impl TileRecord {
    pub fn key(&self) -> TileKey {
        TileKey {
            image_id: self.image_id.clone(),
            scale_id: self.scale_id,
            tile_index: self.tile_index,
        }
    }
}

/// Identity of a tile across manifests.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileKey {
    pub image_id: String,
    pub scale_id: u32,
    pub tile_index: usize,
}

/// Tile whose aspect ratio matches the image's and whose area is close to
/// `base_side²`.
pub fn rectangular_scale(
    img: &SourceImage,
    scale_id: u32,
    base_side: usize,
    overlap: f64,
) -> Result<TileScale> {
    if base_side == 0 {
        return Err(Error::InvalidScale("base side must be at least 1".into()));
    }
    let ar = img.width() as f64 / img.height() as f64;
    let root = ar.sqrt();
    let tile_w = (base_side as f64 * root).round();
    let tile_h = (base_side as f64 / root).round();
    if tile_w < 1.0 || tile_h < 1.0 {
        return Err(Error::InvalidScale(format!(
            "aspect ratio {ar} collapses a {base_side}px tile"
        )));
    }
    TileScale::new(scale_id, tile_w as usize, tile_h as usize, overlap)
}

/// Row-major copy of a tile's pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct TilePixels {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

pub fn extract_tile(img: &SourceImage, rec: &TileRecord) -> Result<TilePixels> {
    extract_region(img, rec.x, rec.y, rec.w, rec.h)
}

pub fn extract_region(
    img: &SourceImage,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Result<TilePixels> {
    check_region(img, x, y, w, h)?;
    let mut data = Vec::with_capacity(w * h);
    for row in y..y + h {
        data.extend_from_slice(&img.row(row)[x..x + w]);
    }
    Ok(TilePixels {
        width: w,
        height: h,
        data,
    })
}

pub(crate) fn check_region(
    img: &SourceImage,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Result<()> {
    let fits = w > 0
        && h > 0
        && x.checked_add(w).is_some_and(|r| r <= img.width())
        && y.checked_add(h).is_some_and(|b| b <= img.height());
    if fits {
        Ok(())
    } else {
        Err(Error::InvalidRegion {
            x,
            y,
            w,
            h,
            width: img.width(),
            height: img.height(),
        })
    }
}

/// Draws `n` tile origins uniformly (with replacement) from every in-bounds
/// pixel position. Deterministic for a given seed.
pub fn random_tile_sample(
    img: &SourceImage,
    scale: TileScale,
    n: usize,
    seed: u64,
) -> Result<Vec<TileRecord>> {
    if scale.tile_w > img.width() || scale.tile_h > img.height() {
        return Err(Error::TileExceedsImage {
            tile_w: scale.tile_w,
            tile_h: scale.tile_h,
            width: img.width(),
            height: img.height(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput("random tile sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_x = img.width() - scale.tile_w;
    let max_y = img.height() - scale.tile_h;
    Ok((0..n)
        .map(|i| TileRecord {
            image_id: img.image_id.clone(),
            scale_id: scale.scale_id,
            tile_index: i,
            x: rng.gen_range(0..=max_x),
            y: rng.gen_range(0..=max_y),
            w: scale.tile_w,
            h: scale.tile_h,
            entropy: 0.0,
            retained: false,
        })
        .collect())
}
