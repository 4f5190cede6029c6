use rayon::prelude::*;

use super::SiftConfig;
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub const MIN_IMAGE_SIZE: usize = 32;
/// Smallest octave side length kept in the pyramid.
pub const MIN_OCTAVE_SIZE: usize = 8;

/// Single-channel float raster that may hold negative values.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().to_vec(),
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Value with coordinates clamped into the plane.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Every second sample in each direction.
    pub fn decimate(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    fn sub(&self, other: &Plane) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return src.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let mut tmp = vec![0.0f32; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src.at_clamped(x as isize + i as isize - r, y as isize);
            }
            *out = acc;
        }
    });
    let tmp = Plane {
        width: w,
        height: h,
        data: tmp,
    };
    let mut data = vec![0.0f32; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp.at_clamped(x as isize, y as isize + i as isize - r);
            }
            *out = acc;
        }
    });
    Plane {
        width: w,
        height: h,
        data,
    }
}

#[derive(Debug, Clone)]
pub struct Octave {
    /// `scales_per_octave + 3` progressively blurred images.
    pub gaussians: Vec<Plane>,
    /// Differences of adjacent `gaussians`.
    pub dogs: Vec<Plane>,
}

impl Octave {
    pub fn width(&self) -> usize {
        self.gaussians[0].width
    }

    pub fn height(&self) -> usize {
        self.gaussians[0].height
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
}

impl ScaleSpace {
    pub fn octave_count(&self) -> usize {
        self.octaves.len()
    }

    /// Blur of layer `layer` relative to its own octave's sampling grid.
    pub fn layer_sigma(&self, layer: f64) -> f64 {
        self.base_sigma * 2f64.powf(layer / self.scales_per_octave as f64)
    }
}

pub fn octave_count(width: usize, height: usize) -> usize {
    let m = width.min(height);
    let log2 = usize::BITS - 1 - m.leading_zeros();
    (log2 as usize).saturating_sub(MIN_OCTAVE_SIZE.trailing_zeros() as usize - 1)
}

pub fn build_scale_space(img: &GrayImage, config: &SiftConfig) -> Result<ScaleSpace> {
    let (w, h) = (img.width(), img.height());
    if w.min(h) < MIN_IMAGE_SIZE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_IMAGE_SIZE,
        });
    }
    config.validate()?;
    let s = config.scales_per_octave;
    let sigma0 = config.base_sigma;
    let k = 2f64.powf(1.0 / s as f64);
    // Incremental blur taking layer i-1 to layer i.
    let increments: Vec<f64> = (1..s + 3)
        .map(|i| {
            let prev = sigma0 * k.powi(i as i32 - 1);
            let total = prev * k;
            (total * total - prev * prev).sqrt()
        })
        .collect();

    let initial = (sigma0 * sigma0 - config.assumed_blur * config.assumed_blur).max(0.01).sqrt();
    let mut base = gaussian_blur(&Plane::from_gray(img), initial);
    let n_oct = octave_count(w, h);
    let mut octaves = Vec::with_capacity(n_oct);
    for o in 0..n_oct {
        if o > 0 {
            let prev: &Octave = &octaves[o - 1];
            base = prev.gaussians[s].decimate();
        }
        let mut gaussians = Vec::with_capacity(s + 3);
        gaussians.push(base.clone());
        for inc in &increments {
            let next = gaussian_blur(gaussians.last().unwrap(), *inc);
            gaussians.push(next);
        }
        let dogs = gaussians.windows(2).map(|p| p[1].sub(&p[0])).collect();
        octaves.push(Octave { gaussians, dogs });
    }
    Ok(ScaleSpace {
        octaves,
        scales_per_octave: s,
        base_sigma: sigma0,
    })
}
