//! Grayscale images, patch features, noise and PSNR.
//!
//! Pixels are stored row-major on the 0-255 scale. Signals fed to the
//! transform are column-stacked: pixel `(x, y)` sits at `x * height + y`.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, GrayImage, ImageEncoder, ImageReader};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dwt::reflect;
use crate::error::{Error, Result};
use crate::ordering::FeatureMatrix;

/// Peak value used for PSNR and for normalization.
pub const PEAK: f64 = 255.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("image must be at least 1x1, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!("{} pixels for a {width}x{height} image", pixels.len())));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("pixels must be finite".into()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Row-major pixels.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Copy with every pixel divided by [`PEAK`].
    pub fn normalized(&self) -> Image {
        Image { width: self.width, height: self.height, pixels: self.pixels.iter().map(|v| v / PEAK).collect() }
    }

    pub fn column_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for x in 0..self.width {
            out.extend((0..self.height).map(|y| self.get(x, y)));
        }
        out
    }

    pub fn from_column_stacked(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!("{} values for a {width}x{height} image", values.len())));
        }
        let mut pixels = vec![0.0; width * height];
        for x in 0..width {
            for y in 0..height {
                pixels[y * width + x] = values[x * height + y];
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Shape(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + width]);
        }
        Self::new(width, height, pixels)
    }

    pub fn center_crop(&self, width: usize, height: usize) -> Result<Self> {
        if width > self.width || height > self.height {
            return Err(Error::Shape(format!("crop {width}x{height} exceeds {}x{}", self.width, self.height)));
        }
        self.crop((self.width - width) / 2, (self.height - height) / 2, width, height)
    }

    /// Pixels rounded and clamped to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Linear stretch of the pixel range onto 0-255 (constant images map
    /// to mid-gray).
    pub fn contrast_normalized(&self) -> Image {
        let lo = self.pixels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pixels = if hi > lo {
            self.pixels.iter().map(|v| (v - lo) / (hi - lo) * PEAK).collect()
        } else {
            vec![PEAK / 2.0; self.len()]
        };
        Image { width: self.width, height: self.height, pixels }
    }

    /// Reads an 8-bit grayscale PGM or PNG.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = ImageReader::open(path)?.with_guessed_format()?.decode()?;
        let format_err = |reason: &str| Error::ImageFormat { path: path.to_path_buf(), reason: reason.into() };
        let gray = match decoded {
            DynamicImage::ImageLuma8(g) => g,
            DynamicImage::ImageLuma16(_) => return Err(format_err("16-bit images are not supported")),
            _ => return Err(format_err("only 8-bit grayscale images are supported")),
        };
        let (w, h) = gray.dimensions();
        Self::new(w as usize, h as usize, gray.into_raw().into_iter().map(f64::from).collect())
    }

    /// Writes 8-bit grayscale; `.pgm` gives binary PGM, anything else PNG.
    /// Values are rounded and clamped.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_u8();
        let (w, h) = (self.width as u32, self.height as u32);
        let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm {
            let file = std::io::BufWriter::new(std::fs::File::create(path)?);
            PnmEncoder::new(file).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary)).write_image(
                &bytes,
                w,
                h,
                image::ExtendedColorType::L8,
            )?;
        } else {
            let img = GrayImage::from_raw(w, h, bytes).expect("buffer matches dimensions");
            img.save_with_format(path, image::ImageFormat::Png)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchMode {
    /// One patch centred on every pixel, borders extended symmetrically.
    PerPixel,
    /// Only patches that fit inside the image.
    InteriorOnly,
}

/// Square patch geometry; `side` must be odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    pub side: usize,
    pub mode: PatchMode,
}

impl PatchConfig {
    pub fn new(side: usize, mode: PatchMode) -> Result<Self> {
        if side == 0 || side % 2 == 0 {
            return Err(Error::InvalidParameter(format!("patch side must be odd and positive, got {side}")));
        }
        Ok(Self { side, mode })
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }
}

/// Patch features as column-stacked vectors: entry `dx * side + dy` holds
/// the pixel at offset `(dx, dy)` from the patch's top-left corner.
///
/// Per-pixel mode gives one point per pixel in column-stacked order.
/// Interior-only mode gives one point per top-left position `(x0, y0)`,
/// indexed `x0 * (height - side + 1) + y0`; row `dx * side + dy` of the
/// result is then the column-stacked subimage at that offset.
pub fn extract_patches(image: &Image, cfg: &PatchConfig) -> Result<FeatureMatrix> {
    let s = cfg.side;
    if s == 0 || s % 2 == 0 {
        return Err(Error::InvalidParameter(format!("patch side must be odd and positive, got {s}")));
    }
    let (w, h) = (image.width(), image.height());
    let dim = s * s;
    let (nx, ny, shift) = match cfg.mode {
        PatchMode::PerPixel => (w, h, (s / 2) as isize),
        PatchMode::InteriorOnly => {
            if w < s || h < s {
                return Err(Error::Shape(format!("{w}x{h} image is smaller than a {s}x{s} patch")));
            }
            (w - s + 1, h - s + 1, 0)
        }
    };
    let mut data = vec![0.0; nx * ny * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(i, patch)| {
        let (px, py) = ((i / ny) as isize, (i % ny) as isize);
        for dx in 0..s {
            let x = reflect(px - shift + dx as isize, w);
            for dy in 0..s {
                let y = reflect(py - shift + dy as isize, h);
                patch[dx * s + dy] = image.get(x, y);
            }
        }
    });
    FeatureMatrix::new(dim, data)
}

/// Adds i.i.d. `N(0, sigma^2)` noise (0-255 scale, no clipping) drawn from
/// ChaCha8 seeded with `seed`, in row-major pixel order.
pub fn add_awgn(image: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = image
        .pixels
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    Image::new(image.width, image.height, pixels)
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            reference.width, reference.height, test.width, test.height
        )));
    }
    let sum: f64 = reference.pixels.iter().zip(&test.pixels).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / reference.len() as f64)
}

/// `10 log10(255^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    let e = mse(reference, test)?;
    Ok(if e == 0.0 { f64::INFINITY } else { 10.0 * (PEAK * PEAK / e).log10() })
}

/// Synthetic test image: a bright square rotated by `angle_deg` on a dark
/// background, 4x4 supersampled along its edges.
pub fn rotated_square(size: usize, angle_deg: f64) -> Result<Image> {
    if size == 0 {
        return Err(Error::Shape("image size must be positive".into()));
    }
    let c = size as f64 / 2.0;
    let half = size as f64 / 4.0;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (fg, bg) = (200.0, 40.0);
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let mut inside = 0;
            for sy in 0..4 {
                for sx in 0..4 {
                    let px = x as f64 + (sx as f64 + 0.5) / 4.0 - c;
                    let py = y as f64 + (sy as f64 + 0.5) / 4.0 - c;
                    let (u, v) = (cos * px + sin * py, -sin * px + cos * py);
                    if u.abs() <= half && v.abs() <= half {
                        inside += 1;
                    }
                }
            }
            let t = inside as f64 / 16.0;
            pixels.push(bg + t * (fg - bg));
        }
    }
    Image::new(size, size, pixels)
}
