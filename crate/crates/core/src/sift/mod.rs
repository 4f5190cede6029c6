//! Scale-invariant feature transform: DoG pyramid, extremum detection and
//! refinement, orientation assignment and 128-element descriptors.

pub mod descriptor;
pub mod dump;
pub mod keypoints;
pub mod orientation;
pub mod scale_space;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Mask};
use crate::segmentation::SliceRegion;

pub use descriptor::DESCRIPTOR_LEN;
pub use keypoints::{detect_extrema, localize_and_filter, Candidate, Keypoint};
pub use scale_space::{build_scale_space, ScaleSpace, MIN_IMAGE_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftConfig {
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Blur already present in the input image.
    pub assumed_blur: f64,
    /// Minimum |DoG| at the refined extremum, on `[0, 1]` intensities.
    pub contrast_threshold: f64,
    /// Fraction of `contrast_threshold` used to pre-screen raw extrema.
    pub prethreshold_factor: f64,
    pub edge_ratio: f64,
    pub descriptor_clamp: f64,
    pub orientation_peak_ratio: f64,
    pub image_border: usize,
    pub max_interpolation_steps: usize,
    /// Discard slice keypoints whose descriptor window lies more than this
    /// fraction outside the slice.
    pub max_outside_fraction: f64,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            scales_per_octave: 3,
            base_sigma: 1.6,
            assumed_blur: 0.5,
            contrast_threshold: 0.03,
            prethreshold_factor: 0.5,
            edge_ratio: 10.0,
            descriptor_clamp: 0.2,
            orientation_peak_ratio: 0.8,
            image_border: 5,
            max_interpolation_steps: 5,
            max_outside_fraction: 0.5,
        }
    }
}

impl SiftConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("sift: {what}")));
        if self.scales_per_octave == 0 {
            return bad("scales_per_octave must be >= 1");
        }
        if !(self.base_sigma > 0.0) || !(self.assumed_blur >= 0.0) {
            return bad("blur parameters must be positive");
        }
        if !(self.contrast_threshold > 0.0) || !(self.prethreshold_factor > 0.0) {
            return bad("contrast thresholds must be positive");
        }
        if !(self.edge_ratio > 1.0) {
            return bad("edge_ratio must exceed 1");
        }
        if !(self.descriptor_clamp > 0.0 && self.descriptor_clamp <= 1.0) {
            return bad("descriptor_clamp must lie in (0, 1]");
        }
        if !(self.orientation_peak_ratio > 0.0 && self.orientation_peak_ratio <= 1.0) {
            return bad("orientation_peak_ratio must lie in (0, 1]");
        }
        if self.image_border == 0 || self.max_interpolation_steps == 0 {
            return bad("image_border and max_interpolation_steps must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.max_outside_fraction) {
            return bad("max_outside_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftFeature {
    pub x: f32,
    pub y: f32,
    pub scale: f32,
    /// Radians in `[0, 2pi)`.
    pub orientation: f32,
    pub descriptor: Vec<f32>,
    pub octave: u8,
    pub layer: u8,
}

impl SiftFeature {
    /// Canonical order: octave, layer, y, x, orientation, then the
    /// remaining fields so that the order is total.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.octave
            .cmp(&other.octave)
            .then(self.layer.cmp(&other.layer))
            .then(self.y.total_cmp(&other.y))
            .then(self.x.total_cmp(&other.x))
            .then(self.orientation.total_cmp(&other.orientation))
            .then(self.scale.total_cmp(&other.scale))
            .then_with(|| {
                self.descriptor
                    .iter()
                    .zip(&other.descriptor)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }
}

pub fn sort_canonical(features: &mut [SiftFeature]) {
    features.sort_by(SiftFeature::canonical_cmp);
}

/// Full pipeline on one grayscale image, in canonical order.
pub fn extract_sift(img: &GrayImage, config: &SiftConfig) -> Result<Vec<SiftFeature>> {
    let ss = build_scale_space(img, config)?;
    let candidates = detect_extrema(&ss, config);
    let kps = localize_and_filter(&candidates, &ss, config);
    Ok(describe(&kps, &ss, config))
}

/// Orientation assignment and descriptors for refined keypoints.
pub fn describe(kps: &[Keypoint], ss: &ScaleSpace, config: &SiftConfig) -> Vec<SiftFeature> {
    let per_kp: Vec<Vec<SiftFeature>> = kps
        .par_iter()
        .map(|kp| {
            orientation::assign_orientations(kp, ss, config)
                .into_iter()
                .filter_map(|angle| {
                    let desc = descriptor::compute_descriptor(kp, angle, ss, config)?;
                    Some(SiftFeature {
                        x: kp.x as f32,
                        y: kp.y as f32,
                        scale: kp.scale as f32,
                        orientation: (angle as f32).rem_euclid(std::f32::consts::TAU) % std::f32::consts::TAU,
                        descriptor: desc,
                        octave: kp.octave as u8,
                        layer: kp.layer as u8,
                    })
                })
                .collect()
        })
        .collect();
    let mut out: Vec<SiftFeature> = per_kp.into_iter().flatten().collect();
    sort_canonical(&mut out);
    out
}

/// Fraction of the square descriptor window around a keypoint that falls
/// outside `support` (pixels beyond the raster count as outside).
fn outside_fraction(support: &Mask, x: f64, y: f64, half: f64) -> f64 {
    let (w, h) = (support.width() as isize, support.height() as isize);
    let x0 = (x - half).round() as isize;
    let x1 = (x + half).round() as isize;
    let y0 = (y - half).round() as isize;
    let y1 = (y + half).round() as isize;
    let mut inside = 0usize;
    let mut total = 0usize;
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            total += 1;
            if xx >= 0 && yy >= 0 && xx < w && yy < h && support.get(xx as usize, yy as usize) {
                inside += 1;
            }
        }
    }
    1.0 - inside as f64 / total as f64
}

/// SIFT restricted to `support`. The image is zero-padded up to the
/// minimum pyramid size, keypoints whose descriptor window is mostly
/// outside the support are dropped, and `offset` is added to the returned
/// coordinates.
pub fn extract_region_features(
    gray: &GrayImage,
    support: &Mask,
    offset: (usize, usize),
    config: &SiftConfig,
) -> Result<Vec<SiftFeature>> {
    support.check_matches(gray.width(), gray.height())?;
    let (w, h) = (gray.width(), gray.height());
    let (pw, ph) = (w.max(MIN_IMAGE_SIZE), h.max(MIN_IMAGE_SIZE));
    let padded = if (pw, ph) == (w, h) {
        gray.clone()
    } else {
        GrayImage::from_fn(pw, ph, |x, y| if x < w && y < h { gray.get(x, y) } else { 0.0 })?
    };
    let features = extract_sift(&padded, config)?;
    let half_cells = 0.5 * descriptor::GRID as f64 * descriptor::CELL_WIDTH_FACTOR;
    let (ox, oy) = (offset.0 as f32, offset.1 as f32);
    Ok(features
        .into_iter()
        .filter(|f| {
            let (x, y) = (f.x as f64, f.y as f64);
            x >= 0.0
                && y >= 0.0
                && x <= (w - 1) as f64
                && y <= (h - 1) as f64
                && outside_fraction(support, x, y, half_cells * f.scale as f64) <= config.max_outside_fraction
        })
        .map(|mut f| {
            f.x += ox;
            f.y += oy;
            f
        })
        .collect())
}

/// SIFT on a slice's bounding-box crop, in full-image coordinates.
pub fn extract_slice_features(slice: &SliceRegion, config: &SiftConfig) -> Result<Vec<SiftFeature>> {
    let b = slice.bounding_box;
    extract_region_features(&slice.gray_patch, &slice.support, (b.x0, b.y0), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn texture(n: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..n * n / 60)
            .map(|_| {
                (
                    rng.random::<f64>() * n as f64,
                    rng.random::<f64>() * n as f64,
                    1.5 + rng.random::<f64>() * 4.0,
                    rng.random::<f64>() - 0.5,
                )
            })
            .collect();
        GrayImage::from_fn(n, n, |x, y| {
            let mut v = 0.5;
            for &(bx, by, s, a) in &blobs {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                if d2 < 16.0 * s * s {
                    v += a * (-d2 / (2.0 * s * s)).exp();
                }
            }
            v as f32
        })
        .unwrap()
    }

    #[test]
    fn constant_image_has_no_features() {
        let img = GrayImage::filled(128, 128, 0.5).unwrap();
        assert!(extract_sift(&img, &SiftConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn texture_features_satisfy_invariants() {
        let img = texture(128, 5);
        let feats = extract_sift(&img, &SiftConfig::default()).unwrap();
        assert!(feats.len() >= 10, "only {} features", feats.len());
        for f in &feats {
            assert_eq!(f.descriptor.len(), DESCRIPTOR_LEN);
            let norm: f64 = f.descriptor.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
            assert!(f.descriptor.iter().all(|&v| (0.0..=0.2 + 1e-6).contains(&v)));
            assert!((0.0..std::f32::consts::TAU).contains(&f.orientation));
            assert!(f.x >= 0.0 && f.y >= 0.0 && f.x < 128.0 && f.y < 128.0);
        }
        assert!(feats.windows(2).all(|w| w[0].canonical_cmp(&w[1]).is_le()));
        assert_eq!(extract_sift(&img, &SiftConfig::default()).unwrap(), feats);
    }

    #[test]
    fn config_validation() {
        assert!(SiftConfig::default().validate().is_ok());
        let bad = SiftConfig {
            edge_ratio: 0.5,
            ..SiftConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
