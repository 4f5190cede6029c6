//! Pixel classification by mixture component and slice-region extraction.

use crate::divergence::symmetric_gaussian_kl;
use crate::error::{Error, Result};
use crate::gmm::{Gaussian, Gmm, MAX_COMPONENTS};
use crate::imaging::{self, ColorImage, Decolorizer, GrayImage, Mask};

pub const DEFAULT_MIN_SLICE_PIXELS: usize = 64;

/// Per-pixel component labels; `None` marks pixels outside the mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    components: usize,
    labels: Vec<Option<usize>>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, components: usize, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::dims(width * height, labels.len()));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&l| l >= components) {
            return Err(Error::InvalidConfig(format!("label {bad} >= component count {components}")));
        }
        Ok(Self {
            width,
            height,
            components,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> Option<usize> {
        self.labels[y * self.width + x]
    }
}

/// Index of the component maximizing `log w + log f(x)`; ties go to the
/// lowest index.
fn classify(log_weights: &[f64], gaussians: &[&Gaussian], x: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, g) in gaussians.iter().enumerate() {
        let score = log_weights[j] + g.log_pdf_unchecked(x);
        if score > best.1 {
            best = (j, score);
        }
    }
    best.0
}

pub fn assign_pixels(model: &Gmm, img: &ColorImage, mask: &Mask) -> Result<LabelMap> {
    mask.check_matches(img.width(), img.height())?;
    if model.dim() != 3 {
        return Err(Error::dims(3, model.dim()));
    }
    let log_weights: Vec<f64> = model.components().iter().map(|c| c.weight.ln()).collect();
    let gaussians: Vec<&Gaussian> = model.components().iter().map(|c| &c.gaussian).collect();
    let labels = img
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(p, &inside)| inside.then(|| classify(&log_weights, &gaussians, &p.map(f64::from))))
        .collect();
    LabelMap::new(img.width(), img.height(), model.len(), labels)
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

#[derive(Debug, Clone)]
pub struct SliceRegion {
    pub component_index: usize,
    pub pixel_coords: Vec<(usize, usize)>,
    pub bounding_box: BoundingBox,
    /// Bounding-box crop with pixels of other regions set to black.
    pub color_patch: ColorImage,
    /// Decolorized crop, equalized over the region's own pixels.
    pub gray_patch: GrayImage,
    /// Region membership within the crop.
    pub support: Mask,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceOptions {
    pub min_pixels: usize,
    pub decolorizer: Decolorizer,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self {
            min_pixels: DEFAULT_MIN_SLICE_PIXELS,
            decolorizer: Decolorizer::Luminance,
        }
    }
}

/// One region per component with at least `min_pixels` pixels, in
/// component order.
pub fn extract_slices(labels: &LabelMap, img: &ColorImage, options: &SliceOptions) -> Result<Vec<SliceRegion>> {
    if labels.width != img.width() || labels.height != img.height() {
        return Err(Error::dims(
            format!("{}x{}", img.width(), img.height()),
            format!("{}x{}", labels.width, labels.height),
        ));
    }
    let mut coords: Vec<Vec<(usize, usize)>> = vec![Vec::new(); labels.components];
    for (i, l) in labels.labels.iter().enumerate() {
        if let Some(l) = l {
            coords[*l].push((i % labels.width, i / labels.width));
        }
    }
    let mut slices = Vec::new();
    for (component, pts) in coords.into_iter().enumerate() {
        if pts.is_empty() || pts.len() < options.min_pixels {
            continue;
        }
        let bbox = pts.iter().fold(
            BoundingBox {
                x0: usize::MAX,
                y0: usize::MAX,
                x1: 0,
                y1: 0,
            },
            |b, &(x, y)| BoundingBox {
                x0: b.x0.min(x),
                y0: b.y0.min(y),
                x1: b.x1.max(x),
                y1: b.y1.max(y),
            },
        );
        let (w, h) = (bbox.width(), bbox.height());
        let mut patch = ColorImage::filled(w, h, [0, 0, 0])?;
        let mut bits = vec![false; w * h];
        for &(x, y) in &pts {
            let (cx, cy) = (x - bbox.x0, y - bbox.y0);
            patch.set(cx, cy, img.get(x, y));
            bits[cy * w + cx] = true;
        }
        let support = Mask::new(w, h, bits)?;
        let gray = imaging::decolorize_with(&patch, options.decolorizer);
        let gray_patch = imaging::histogram_equalize_masked(&gray, &support)?;
        slices.push(SliceRegion {
            component_index: component,
            pixel_coords: pts,
            bounding_box: bbox,
            color_patch: patch,
            gray_patch,
            support,
        });
    }
    if slices.is_empty() {
        return Err(Error::NoSlices {
            min_pixels: options.min_pixels,
        });
    }
    Ok(slices)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    /// `(reference index, probe index, cost)` in the order they were matched.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_reference: Vec<usize>,
    pub unmatched_probe: Vec<usize>,
}

impl Correspondence {
    pub fn total_cost(&self) -> f64 {
        let mut costs: Vec<f64> = self.pairs.iter().map(|p| p.2).collect();
        costs.sort_by(f64::total_cmp);
        costs.iter().sum()
    }
}

/// Greedy minimum-cost pairing of slices by symmetrized Gaussian divergence.
pub fn correspond_slices(reference: &[Gaussian], probe: &[Gaussian]) -> Result<Correspondence> {
    if reference.is_empty() || probe.is_empty() {
        return Err(Error::EmptyData);
    }
    if reference.len() > MAX_COMPONENTS || probe.len() > MAX_COMPONENTS {
        return Err(Error::InvalidConfig("too many slices".into()));
    }
    let mut costs = Vec::with_capacity(reference.len() * probe.len());
    for (i, r) in reference.iter().enumerate() {
        for (j, p) in probe.iter().enumerate() {
            costs.push((symmetric_gaussian_kl(r, p)?, i, j));
        }
    }
    costs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_r = vec![false; reference.len()];
    let mut used_p = vec![false; probe.len()];
    let mut pairs = Vec::new();
    for (c, i, j) in costs {
        if !used_r[i] && !used_p[j] {
            used_r[i] = true;
            used_p[j] = true;
            pairs.push((i, j, c));
        }
    }
    let unmatched = |used: &[bool]| used.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect();
    Ok(Correspondence {
        pairs,
        unmatched_reference: unmatched(&used_r),
        unmatched_probe: unmatched(&used_p),
    })
}
