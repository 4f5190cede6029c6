//! Raster containers, image I/O, masking, color-to-gray conversion and
//! histogram equalization.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::dims(width * height, pixels.len()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: Rgb) {
        self.pixels[y * self.width + x] = value;
    }
}

/// Grayscale raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::dims(width * height, pixels.len()));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {bad} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from a closure over `(x, y)`, clamping into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample with edge clamping; `(x, y)` are pixel-center coordinates.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        let max_x = (self.width - 1) as f32;
        let max_y = (self.height - 1) as f32;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// 2x2 box-filter downsampling.
    pub fn downsample_half(&self) -> Result<Self> {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        Self::from_fn(w, h, |x, y| {
            let xs = [2 * x, (2 * x + 1).min(self.width - 1)];
            let ys = [2 * y, (2 * y + 1).min(self.height - 1)];
            let mut acc = 0.0;
            for &yy in &ys {
                for &xx in &xs {
                    acc += self.get(xx, yy);
                }
            }
            acc / 4.0
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::dims(width * height, bits.len()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub(crate) fn check_matches(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::dims(
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Decodes a PNG or binary PPM (P6) file, selected by content signature.
pub fn load_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

fn decode_image(bytes: &[u8], path: &Path) -> Result<ColorImage> {
    if bytes.starts_with(b"P6") {
        return decode_ppm(bytes).map_err(|reason| Error::Decode {
            path: path.to_path_buf(),
            reason,
        });
    }
    if bytes.starts_with(b"\x89PNG") {
        let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = decoded.dimensions();
        let pixels = decoded.pixels().map(|p| p.0).collect();
        return ColorImage::new(w as usize, h as usize, pixels);
    }
    Err(Error::UnsupportedFormat(path.to_path_buf()))
}

fn decode_ppm(bytes: &[u8]) -> std::result::Result<ColorImage, String> {
    // Header tokens: magic, width, height, maxval; each separated by whitespace,
    // '#' comments allowed; exactly one whitespace byte before the raster.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    if tokens[0] != "P6" {
        return Err(format!("bad magic {}", tokens[0]));
    }
    let parse = |t: &str, what: &str| t.parse::<usize>().map_err(|_| format!("bad {what} {t:?}"));
    let width = parse(tokens[1], "width")?;
    let height = parse(tokens[2], "height")?;
    let maxval = parse(tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    if width == 0 || height == 0 {
        return Err(format!("zero dimension {width}x{height}"));
    }
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or_default();
    let needed = width * height * 3;
    if raster.len() < needed {
        return Err(format!("truncated raster: {} of {needed} bytes", raster.len()));
    }
    let pixels = raster[..needed]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    ColorImage::new(width, height, pixels).map_err(|e| e.to_string())
}

/// Serializes as binary PPM: `"P6\n{w} {h}\n255\n"` then raw RGB bytes.
pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len() * 3);
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn save_ppm(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn save_png(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, raw)
        .expect("pixel count checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

pub fn gray_to_color(img: &GrayImage) -> ColorImage {
    let pixels = img
        .pixels
        .iter()
        .map(|v| {
            let b = (v * 255.0).round() as u8;
            [b, b, b]
        })
        .collect();
    ColorImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// White inside, black outside.
pub fn mask_to_image(mask: &Mask) -> ColorImage {
    let pixels = mask.bits.iter().map(|&b| if b { [255; 3] } else { [0; 3] }).collect();
    ColorImage {
        width: mask.width,
        height: mask.height,
        pixels,
    }
}

/// Loads a crop mask; pixels with luma >= 128 are inside.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = load_image(path)?;
    let bits = img
        .pixels
        .iter()
        .map(|p| luminance(*p) >= 0.5)
        .collect();
    Mask::new(img.width, img.height, bits)
}

/// Pixels under the mask, row-major.
pub fn apply_mask(img: &ColorImage, mask: &Mask) -> Result<Vec<Rgb>> {
    mask.check_matches(img.width, img.height)?;
    let selected: Vec<Rgb> = img
        .pixels
        .iter()
        .zip(&mask.bits)
        .filter(|(_, &b)| b)
        .map(|(p, _)| *p)
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(selected)
}

/// Rec. 601 luma of an 8-bit pixel, in `[0, 1]`.
pub fn luminance(p: Rgb) -> f32 {
    (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decolorizer {
    /// Weighted luminance (0.299, 0.587, 0.114).
    #[default]
    Luminance,
    /// Luminance plus a projection of chroma on the image's predominant
    /// chromatic axis, so isoluminant color edges keep some contrast.
    ContrastEnhancing,
}

pub fn decolorize(img: &ColorImage) -> GrayImage {
    decolorize_with(img, Decolorizer::Luminance)
}

pub fn decolorize_with(img: &ColorImage, method: Decolorizer) -> GrayImage {
    let luma: Vec<f32> = img.pixels.iter().map(|p| luminance(*p).clamp(0.0, 1.0)).collect();
    let pixels = match method {
        Decolorizer::Luminance => luma,
        Decolorizer::ContrastEnhancing => contrast_enhancing(img, luma),
    };
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

fn contrast_enhancing(img: &ColorImage, luma: Vec<f32>) -> Vec<f32> {
    const EFFECT: f64 = 0.5;
    let chroma: Vec<(f64, f64)> = img
        .pixels
        .iter()
        .map(|p| {
            let [r, g, b] = p.map(|c| c as f64 / 255.0);
            ((r + g) * 0.5 - b, r - g)
        })
        .collect();
    let (w, h) = (img.width, img.height);
    let sigma = (2.0 * w.min(h) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0064_6563_6f6c_6f72);
    let mut axis = (0.0f64, 0.0f64);
    let mut pairs = Vec::with_capacity(luma.len());
    for i in 0..luma.len() {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let dx: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let dy: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let px = (x + dx).round().clamp(0.0, (w - 1) as f64) as usize;
        let py = (y + dy).round().clamp(0.0, (h - 1) as f64) as usize;
        let j = py * w + px;
        let dl = luma[i] as f64 - luma[j] as f64;
        let (dp, dq) = (chroma[i].0 - chroma[j].0, chroma[i].1 - chroma[j].1);
        let sign = if dl < 0.0 { -1.0 } else { 1.0 };
        axis.0 += sign * dp;
        axis.1 += sign * dq;
        pairs.push((dl.abs(), j));
    }
    let norm = (axis.0 * axis.0 + axis.1 * axis.1).sqrt();
    if norm == 0.0 {
        return luma;
    }
    let axis = (axis.0 / norm, axis.1 / norm);
    let projected: Vec<f64> = chroma.iter().map(|c| c.0 * axis.0 + c.1 * axis.1).collect();
    // Scale the chroma term by how much contrast luminance alone loses.
    let (mut lum_contrast, mut chroma_contrast) = (0.0, 0.0);
    for (i, &(dl, j)) in pairs.iter().enumerate() {
        lum_contrast += dl;
        chroma_contrast += (projected[i] - projected[j]).abs();
    }
    let gain = if chroma_contrast > 0.0 {
        EFFECT * chroma_contrast / (lum_contrast + chroma_contrast)
    } else {
        0.0
    };
    let raw: Vec<f64> = luma
        .iter()
        .zip(&projected)
        .map(|(l, c)| *l as f64 + gain * c)
        .collect();
    let (lo, hi) = raw.iter().fold((0.0f64, 1.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    raw.iter().map(|v| ((v - lo) / (hi - lo)) as f32).collect()
}

pub const EQUALIZATION_BINS: usize = 256;

fn bin_of(v: f32) -> usize {
    ((v * EQUALIZATION_BINS as f32) as usize).min(EQUALIZATION_BINS - 1)
}

/// Empirical-CDF remapping over 256 bins: each level maps to the fraction of
/// pixels at or below its bin.
pub fn histogram_equalize(img: &GrayImage) -> GrayImage {
    let lut = equalization_lut(img.pixels.iter().copied());
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|v| lut[bin_of(*v)]).collect(),
    }
}

/// Equalizes using only pixels inside `support`; pixels outside become 0.
pub fn histogram_equalize_masked(img: &GrayImage, support: &Mask) -> Result<GrayImage> {
    support.check_matches(img.width, img.height)?;
    let lut = equalization_lut(
        img.pixels
            .iter()
            .zip(&support.bits)
            .filter(|(_, &b)| b)
            .map(|(v, _)| *v),
    );
    let pixels = img
        .pixels
        .iter()
        .zip(&support.bits)
        .map(|(v, &b)| if b { lut[bin_of(*v)] } else { 0.0 })
        .collect();
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    })
}

fn equalization_lut(values: impl Iterator<Item = f32>) -> [f32; EQUALIZATION_BINS] {
    let mut hist = [0usize; EQUALIZATION_BINS];
    let mut total = 0usize;
    for v in values {
        hist[bin_of(v)] += 1;
        total += 1;
    }
    let mut lut = [0.0f32; EQUALIZATION_BINS];
    if total == 0 {
        return lut;
    }
    let mut running = 0usize;
    for (b, count) in hist.iter().enumerate() {
        running += count;
        lut[b] = (running as f64 / total as f64) as f32;
    }
    lut
}
