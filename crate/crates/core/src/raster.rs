//! Image loading, luminance conversion, resolution screening and
//! area-averaging resampling to a common physical resolution.

use std::fmt;
use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};

/// An 8-bit single-channel raster with its physical digitization resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceImage {
    pub image_id: String,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    /// Pixels per cm of canvas.
    native_resolution: f64,
    /// `Some(true)` marks the target class (the artist), `Some(false)` the other.
    pub label: Option<bool>,
}

impl SourceImage {
    /// Builds an image from row-major luminance values.
    pub fn from_pixels(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
        native_resolution: f64,
        label: Option<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(Error::PixelCount {
                expected: width * height,
                got: pixels.len(),
            });
        }
        check_resolution(native_resolution)?;
        Ok(Self {
            image_id: image_id.into(),
            width,
            height,
            pixels,
            native_resolution,
            label,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        native_resolution: f64,
        label: Option<bool>,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::from_pixels(image_id, width, height, pixels, native_resolution, label)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn native_resolution(&self) -> f64 {
        self.native_resolution
    }

    /// Row-major pixel buffer.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Replaces the recorded resolution without touching pixels.
    pub fn with_resolution(mut self, native_resolution: f64) -> Result<Self> {
        check_resolution(native_resolution)?;
        self.native_resolution = native_resolution;
        Ok(self)
    }
}

fn check_resolution(res: f64) -> Result<()> {
    if res.is_finite() && res > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidResolution(res))
    }
}

/// ITU-R 601 luma, rounded half up: `0.299 R + 0.587 G + 0.114 B`.
///
/// Evaluated in integer thousandths so gray inputs map to themselves exactly.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000) as u8
}

/// Converts a decoded image to 8-bit luminance.
pub fn to_luminance(img: &DynamicImage) -> Vec<u8> {
    match img {
        DynamicImage::ImageLuma8(gray) => gray.as_raw().clone(),
        DynamicImage::ImageLumaA8(gray) => gray.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => img.to_luma8().into_raw(),
        _ => img
            .to_rgb8()
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect(),
    }
}

/// Decodes a PNG or JPEG file into a luminance [`SourceImage`].
///
/// The image id is the file stem.
pub fn load_image(
    path: impl AsRef<Path>,
    native_resolution: f64,
    label: Option<bool>,
) -> Result<SourceImage> {
    let path = path.as_ref();
    check_resolution(native_resolution)?;
    let decoded = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SourceImage::from_pixels(
        id,
        width,
        height,
        to_luminance(&decoded),
        native_resolution,
        label,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolutionPolicy {
    /// Pixels per cm every accepted image is resampled to.
    pub target_resolution: f64,
    /// Largest accepted native/target ratio.
    pub max_downscale_ratio: f64,
    pub allow_upsampling: bool,
}

impl ResolutionPolicy {
    pub fn new(target_resolution: f64) -> Result<Self> {
        check_resolution(target_resolution)?;
        Ok(Self {
            target_resolution,
            max_downscale_ratio: 5.0,
            allow_upsampling: false,
        })
    }

    pub fn with_max_downscale_ratio(mut self, ratio: f64) -> Result<Self> {
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(Error::Config(format!(
                "max_downscale_ratio must be >= 1, got {ratio}"
            )));
        }
        self.max_downscale_ratio = ratio;
        Ok(self)
    }

    pub fn with_upsampling(mut self, allow: bool) -> Self {
        self.allow_upsampling = allow;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RejectReason {
    Upsampling { native: f64, target: f64 },
    ExcessiveDownscale { ratio: f64, max: f64 },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Upsampling { native, target } => write!(
                f,
                "upsampling (native {native} px/cm below target {target} px/cm)"
            ),
            RejectReason::ExcessiveDownscale { ratio, max } => {
                write!(f, "downscale ratio {ratio:.3} exceeds {max}")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScreenVerdict {
    /// `ratio` is native / target.
    Accept {
        ratio: f64,
    },
    Reject(RejectReason),
}

impl ScreenVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, ScreenVerdict::Accept { .. })
    }
}

/// Decides whether an image can be normalized without upsampling or
/// excessive downsampling.
pub fn screen_candidate(img: &SourceImage, policy: &ResolutionPolicy) -> ScreenVerdict {
    let native = img.native_resolution();
    let target = policy.target_resolution;
    let ratio = native / target;
    if native < target && !policy.allow_upsampling {
        return ScreenVerdict::Reject(RejectReason::Upsampling { native, target });
    }
    if ratio > policy.max_downscale_ratio {
        return ScreenVerdict::Reject(RejectReason::ExcessiveDownscale {
            ratio,
            max: policy.max_downscale_ratio,
        });
    }
    ScreenVerdict::Accept { ratio }
}

/// `round(dim * target / native)`, rounding half up.
pub fn scaled_dimension(dim: usize, native: f64, target: f64) -> usize {
    (dim as f64 * target / native + 0.5).floor() as usize
}

/// Resamples to `target_resolution` px/cm by area averaging.
///
/// Each output pixel is the coverage-weighted mean of the source pixels its
/// footprint overlaps. Equal resolutions return the image unchanged.
pub fn resample(img: &SourceImage, target_resolution: f64) -> Result<SourceImage> {
    check_resolution(target_resolution)?;
    let native = img.native_resolution();
    if target_resolution == native {
        return Ok(img.clone());
    }
    let out_w = scaled_dimension(img.width(), native, target_resolution);
    let out_h = scaled_dimension(img.height(), native, target_resolution);
    if out_w == 0 || out_h == 0 {
        return Err(Error::DegenerateResample {
            width: img.width(),
            height: img.height(),
            target: target_resolution,
        });
    }

    let wx = area_weights(img.width(), out_w);
    let wy = area_weights(img.height(), out_h);

    // horizontal pass: src_h rows of out_w
    let mut horiz = vec![0.0f64; out_w * img.height()];
    for y in 0..img.height() {
        let row = img.row(y);
        let dst = &mut horiz[y * out_w..(y + 1) * out_w];
        for (o, taps) in wx.iter().enumerate() {
            dst[o] = taps.iter().map(|&(i, w)| w * row[i] as f64).sum();
        }
    }

    let mut pixels = vec![0u8; out_w * out_h];
    for (o, taps) in wy.iter().enumerate() {
        let dst = &mut pixels[o * out_w..(o + 1) * out_w];
        for (x, px) in dst.iter_mut().enumerate() {
            let v: f64 = taps.iter().map(|&(i, w)| w * horiz[i * out_w + x]).sum();
            *px = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }

    SourceImage::from_pixels(
        img.image_id.clone(),
        out_w,
        out_h,
        pixels,
        target_resolution,
        img.label,
    )
}

/// Per output index, the source indices and normalized coverage weights.
fn area_weights(src: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = src as f64 / out as f64;
    (0..out)
        .map(|o| {
            let start = o as f64 * ratio;
            let end = ((o + 1) as f64 * ratio).min(src as f64);
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src);
            let mut taps: Vec<(usize, f64)> = (first..last)
                .filter_map(|i| {
                    let lo = start.max(i as f64);
                    let hi = end.min((i + 1) as f64);
                    (hi > lo).then_some((i, hi - lo))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, v: u8, res: f64) -> SourceImage {
        SourceImage::from_fn("c", w, h, res, None, |_, _| v).unwrap()
    }

    #[test]
    fn luminance_weights() {
        assert_eq!(luminance(255, 255, 255), 255);
        assert_eq!(luminance(255, 0, 0), 76);
        assert_eq!(luminance(0, 255, 0), 150);
        assert_eq!(luminance(0, 0, 255), 29);
        for v in 0..=255u8 {
            assert_eq!(luminance(v, v, v), v);
        }
    }

    #[test]
    fn zero_sized_image_rejected() {
        assert!(matches!(
            SourceImage::from_pixels("z", 0, 0, vec![], 10.0, None),
            Err(Error::EmptyImage { .. })
        ));
        assert!(SourceImage::from_pixels("z", 1, 1, vec![0], 0.0, None).is_err());
        assert!(SourceImage::from_pixels("z", 1, 1, vec![0], -3.0, None).is_err());
    }

    #[test]
    fn screening_examples() {
        let policy = ResolutionPolicy::new(25.0).unwrap();
        let v = screen_candidate(&constant(2, 2, 0, 50.0), &policy);
        assert_eq!(v, ScreenVerdict::Accept { ratio: 2.0 });
        let v = screen_candidate(&constant(2, 2, 0, 20.0), &policy);
        assert!(matches!(
            v,
            ScreenVerdict::Reject(RejectReason::Upsampling { .. })
        ));
        let v = screen_candidate(&constant(2, 2, 0, 140.0), &policy);
        match v {
            ScreenVerdict::Reject(RejectReason::ExcessiveDownscale { ratio, max }) => {
                assert!((ratio - 5.6).abs() < 1e-12);
                assert_eq!(max, 5.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        // boundary: exactly 5x is accepted, exactly 1x is accepted
        assert!(screen_candidate(&constant(2, 2, 0, 125.0), &policy).is_accepted());
        assert!(screen_candidate(&constant(2, 2, 0, 25.0), &policy).is_accepted());
        let lenient = policy.with_upsampling(true);
        assert!(screen_candidate(&constant(2, 2, 0, 20.0), &lenient).is_accepted());
    }

    #[test]
    fn resample_dimensions() {
        let img = constant(1000, 800, 9, 50.0);
        let out = resample(&img, 25.0).unwrap();
        assert_eq!((out.width(), out.height()), (500, 400));
        assert_eq!(out.native_resolution(), 25.0);
        assert!(out.pixels().iter().all(|&p| p == 9));
    }

    #[test]
    fn resample_identity_at_native_resolution() {
        let img = SourceImage::from_fn("r", 2150, 2700, 26.81, None, |x, y| {
            ((x * 7 + y * 13) % 251) as u8
        })
        .unwrap();
        let out = resample(&img, 26.81).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resample_exact_factor_two_averages_blocks() {
        let img = SourceImage::from_pixels("b", 2, 2, vec![0, 10, 20, 30], 2.0, None).unwrap();
        let out = resample(&img, 1.0).unwrap();
        assert_eq!(out.pixels(), &[15]);
    }

    #[test]
    fn resample_to_zero_is_error() {
        let img = constant(3, 3, 0, 100.0);
        assert!(matches!(
            resample(&img, 1.0),
            Err(Error::DegenerateResample { .. })
        ));
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(scaled_dimension(5, 2.0, 1.0), 3);
        assert_eq!(scaled_dimension(3, 2.0, 1.0), 2);
    }

    #[test]
    fn load_png_and_rgb_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        let rgb = image::RgbImage::from_fn(3, 2, |x, _| {
            if x == 0 {
                image::Rgb([255, 0, 0])
            } else {
                image::Rgb([255, 255, 255])
            }
        });
        rgb.save(&path).unwrap();
        let img = load_image(&path, 30.0, Some(true)).unwrap();
        assert_eq!(img.image_id, "red");
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.get(0, 0), 76);
        assert_eq!(img.get(1, 1), 255);
        assert_eq!(img.label, Some(true));

        let gray_path = dir.path().join("gray.png");
        image::GrayImage::from_fn(2, 2, |x, y| image::Luma([(x * 10 + y) as u8]))
            .save(&gray_path)
            .unwrap();
        let g = load_image(&gray_path, 30.0, None).unwrap();
        assert_eq!(g.pixels(), &[0, 10, 1, 11]);
    }

    #[test]
    fn load_rejects_garbage_and_bad_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not an image").unwrap();
        assert!(load_image(&path, 30.0, None).is_err());
        assert!(matches!(
            load_image(&path, 0.0, None),
            Err(Error::InvalidResolution(_))
        ));
    }
}
