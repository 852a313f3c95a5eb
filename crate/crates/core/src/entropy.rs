//! Shannon entropy of 8-bit images and tiles.
//!
//! [`tile_entropies`] avoids rebuilding a 256-bin histogram from scratch for
//! every tile of a dense grid. Columns are split into segments at every tile
//! edge; one histogram per segment is kept for the current band of rows and
//! slid downwards row by row, and each tile's histogram is slid rightwards
//! by adding and removing whole segments. Counts stay integral throughout,
//! so the result is identical to per-tile recomputation.

use std::fmt;

use crate::error::{Error, Result};
use crate::raster::SourceImage;
use crate::tiler::{check_region, TileGrid};

pub const BINS: usize = 256;

/// Upper bound of the entropy of an 8-bit distribution, `log2(256)`.
pub const MAX_BITS: f64 = 8.0;

#[derive(Clone, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; BINS],
    total: u64,
}

impl fmt::Debug for Histogram256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let occupied: Vec<(usize, u64)> = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k, c))
            .collect();
        f.debug_struct("Histogram256")
            .field("total", &self.total)
            .field("occupied", &occupied)
            .finish()
    }
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self::new()
    }
}

impl Histogram256 {
    pub fn new() -> Self {
        Self {
            counts: [0; BINS],
            total: 0,
        }
    }

    pub fn from_counts(counts: [u64; BINS]) -> Self {
        Self {
            counts,
            total: counts.iter().sum(),
        }
    }

    pub fn from_values(values: &[u8]) -> Self {
        let mut h = Self::new();
        h.add_values(values);
        h
    }

    /// Histogram of the `w`×`h` region at `(x, y)`.
    pub fn from_region(img: &SourceImage, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        check_region(img, x, y, w, h)?;
        let mut hist = Self::new();
        for row in y..y + h {
            hist.add_values(&img.row(row)[x..x + w]);
        }
        Ok(hist)
    }

    pub fn add_values(&mut self, values: &[u8]) {
        for &v in values {
            self.counts[v as usize] += 1;
        }
        self.total += values.len() as u64;
    }

    pub fn counts(&self) -> &[u64; BINS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Bin-wise sum.
    pub fn merge(&mut self, other: &Histogram256) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        self.total += other.total;
    }
}

/// Entropy in bits, always within `[0, 8]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct Entropy(f64);

impl Entropy {
    /// Wraps a precomputed value; `None` outside `[0, 8]`.
    pub fn from_bits(bits: f64) -> Option<Self> {
        (0.0..=MAX_BITS).contains(&bits).then_some(Self(bits))
    }

    pub fn bits(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Entropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} bits", self.0)
    }
}

/// `H = -Σ p_k log2 p_k` with `p_k = counts[k] / total` and `0·log 0 = 0`.
pub fn shannon_entropy(h: &Histogram256) -> Result<Entropy> {
    if h.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(Entropy(entropy_of_counts(&h.counts, h.total)))
}

fn entropy_of_counts(counts: &[u64; BINS], total: u64) -> f64 {
    let n = total as f64;
    let mut acc = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            acc -= p * p.log2();
        }
    }
    // -0.0 and rounding below zero for single-bin histograms
    acc.clamp(0.0, MAX_BITS)
}

pub fn image_entropy(img: &SourceImage) -> Result<Entropy> {
    shannon_entropy(&Histogram256::from_values(img.pixels()))
}

/// Entropy of every tile in `grid`, in grid order, keyed by tile index.
pub fn tile_entropies(img: &SourceImage, grid: &TileGrid) -> Result<Vec<(usize, Entropy)>> {
    let (tw, th) = (grid.scale.tile_w, grid.scale.tile_h);
    for &(x, y) in &grid.origins {
        check_region(img, x, y, tw, th)?;
    }
    if grid.origins.is_empty() {
        return Ok(Vec::new());
    }

    let mut bounds: Vec<usize> = grid
        .origins
        .iter()
        .flat_map(|&(x, _)| [x, x + tw])
        .collect();
    bounds.sort_unstable();
    bounds.dedup();
    let segment_of = |col: usize| bounds.binary_search(&col).expect("tile edge is a bound");

    let mut bands = SegmentBands::new(img, bounds.clone());
    let mut out = Vec::with_capacity(grid.origins.len());
    let mut index = 0;
    for row in grid.origins.chunk_by(|a, b| a.1 == b.1) {
        bands.move_to(row[0].1, th);

        let mut tile = [0u64; BINS];
        let mut prev: Option<(usize, usize)> = None;
        for &(x, _) in row {
            let (start, end) = (segment_of(x), segment_of(x + tw));
            match prev {
                Some((ps, pe)) if start < pe && start >= ps => {
                    for s in ps..start {
                        bands.sub_segment(s, &mut tile);
                    }
                    for s in pe..end {
                        bands.add_segment(s, &mut tile);
                    }
                }
                _ => {
                    tile = [0; BINS];
                    for s in start..end {
                        bands.add_segment(s, &mut tile);
                    }
                }
            }
            prev = Some((start, end));
            let total = (tw * th) as u64;
            out.push((index, Entropy(entropy_of_counts(&tile, total))));
            index += 1;
        }
    }
    Ok(out)
}

/// Per column-segment histograms over a band of rows.
struct SegmentBands<'a> {
    img: &'a SourceImage,
    bounds: Vec<usize>,
    hists: Vec<[u32; BINS]>,
    band: Option<(usize, usize)>,
}

impl<'a> SegmentBands<'a> {
    fn new(img: &'a SourceImage, bounds: Vec<usize>) -> Self {
        let segments = bounds.len().saturating_sub(1);
        Self {
            img,
            bounds,
            hists: vec![[0; BINS]; segments],
            band: None,
        }
    }

    fn move_to(&mut self, top: usize, height: usize) {
        match self.band {
            Some((old_top, old_h))
                if old_h == height && top >= old_top && top < old_top + height =>
            {
                for y in old_top..top {
                    self.apply_row(y, false);
                }
                for y in (old_top + height)..(top + height) {
                    self.apply_row(y, true);
                }
            }
            _ => {
                for h in &mut self.hists {
                    *h = [0; BINS];
                }
                for y in top..top + height {
                    self.apply_row(y, true);
                }
            }
        }
        self.band = Some((top, height));
    }

    fn apply_row(&mut self, y: usize, add: bool) {
        let row = self.img.row(y);
        for (s, hist) in self.hists.iter_mut().enumerate() {
            let cols = &row[self.bounds[s]..self.bounds[s + 1]];
            if add {
                for &v in cols {
                    hist[v as usize] += 1;
                }
            } else {
                for &v in cols {
                    hist[v as usize] -= 1;
                }
            }
        }
    }

    fn add_segment(&self, s: usize, tile: &mut [u64; BINS]) {
        for (t, &c) in tile.iter_mut().zip(self.hists[s].iter()) {
            *t += c as u64;
        }
    }

    fn sub_segment(&self, s: usize, tile: &mut [u64; BINS]) {
        for (t, &c) in tile.iter_mut().zip(self.hists[s].iter()) {
            *t -= c as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiler::TileScale;

    #[test]
    fn histogram_examples() {
        let img = SourceImage::from_pixels("h", 2, 2, vec![7; 4], 1.0, None).unwrap();
        let h = Histogram256::from_region(&img, 0, 0, 2, 2).unwrap();
        assert_eq!(h.counts()[7], 4);
        assert_eq!(h.total(), 4);
        assert_eq!(h.occupied_bins(), 1);

        let img = SourceImage::from_pixels("h", 2, 2, vec![0, 255, 0, 255], 1.0, None).unwrap();
        let h = Histogram256::from_region(&img, 0, 0, 2, 2).unwrap();
        assert_eq!((h.counts()[0], h.counts()[255], h.total()), (2, 2, 4));
    }

    #[test]
    fn histogram_is_additive_over_halves() {
        let img =
            SourceImage::from_fn("a", 9, 6, 1.0, None, |x, y| (x * y * 37 % 256) as u8).unwrap();
        let full = Histogram256::from_region(&img, 0, 0, 9, 6).unwrap();
        let mut top = Histogram256::from_region(&img, 0, 0, 9, 3).unwrap();
        top.merge(&Histogram256::from_region(&img, 0, 3, 9, 3).unwrap());
        assert_eq!(full, top);
    }

    #[test]
    fn bad_regions() {
        let img = SourceImage::from_pixels("h", 2, 2, vec![0; 4], 1.0, None).unwrap();
        assert!(Histogram256::from_region(&img, 0, 0, 0, 2).is_err());
        assert!(Histogram256::from_region(&img, 1, 1, 2, 1).is_err());
    }

    #[test]
    fn entropy_examples() {
        let mut counts = [0u64; BINS];
        counts[3] = 10;
        assert_eq!(
            shannon_entropy(&Histogram256::from_counts(counts))
                .unwrap()
                .bits(),
            0.0
        );
        counts[200] = 10;
        assert_eq!(
            shannon_entropy(&Histogram256::from_counts(counts))
                .unwrap()
                .bits(),
            1.0
        );
        let uniform = Histogram256::from_counts([5; BINS]);
        assert_eq!(shannon_entropy(&uniform).unwrap().bits(), 8.0);
        assert!(matches!(
            shannon_entropy(&Histogram256::new()),
            Err(Error::EmptyHistogram)
        ));
    }

    #[test]
    fn image_entropy_of_checkerboard() {
        let img = SourceImage::from_fn("c", 8, 8, 1.0, None, |x, y| {
            if (x + y) % 2 == 0 {
                10
            } else {
                240
            }
        })
        .unwrap();
        assert_eq!(image_entropy(&img).unwrap().bits(), 1.0);
    }

    #[test]
    fn single_tile_grid_matches_image_entropy() {
        let img =
            SourceImage::from_fn("s", 37, 23, 1.0, None, |x, y| ((x * 11 + y * 5) % 97) as u8)
                .unwrap();
        let grid = TileGrid::for_dimensions(37, 23, TileScale::new(1, 37, 23, 0.0).unwrap());
        let e = tile_entropies(&img, &grid).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].1, image_entropy(&img).unwrap());
    }

    #[test]
    fn constant_image_tiles_have_zero_entropy() {
        let img = SourceImage::from_fn("k", 120, 90, 1.0, None, |_, _| 77).unwrap();
        let grid = TileGrid::for_dimensions(120, 90, TileScale::square(1, 30, 0.7).unwrap());
        assert!(tile_entropies(&img, &grid)
            .unwrap()
            .iter()
            .all(|(_, e)| e.bits() == 0.0));
    }

    #[test]
    fn out_of_bounds_grid_is_rejected() {
        let img = SourceImage::from_fn("k", 10, 10, 1.0, None, |_, _| 0).unwrap();
        let grid = TileGrid {
            scale: TileScale::square(1, 5, 0.0).unwrap(),
            origins: vec![(6, 0)],
        };
        assert!(tile_entropies(&img, &grid).is_err());
    }
}
