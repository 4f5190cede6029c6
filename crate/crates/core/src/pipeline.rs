//! Image to template, and template-pair scoring under each fusion rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fusion::{
    self, align_pair, concat_fuse, ds_fuse_all, fuse_jointly, to_mass, zero_pad_equalize, FeatureSet, FeatureSource,
    MassFunction,
};
use crate::gmm::Gaussian;
use crate::gmm::{mdl_select, Points};
use crate::imaging::{self, ColorImage, Mask};
use crate::segmentation::{assign_pixels, correspond_slices, extract_slices, SliceRegion};
use crate::sift::{extract_region_features, extract_slice_features};
use crate::template::{SliceSummary, Template};

/// How per-slice evidence is combined before matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Whole-image SIFT, no color segmentation.
    Whole,
    Concat,
    Ds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Euclid,
    /// Negative count of matched keypoint pairs.
    Nn,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::Whole, Rule::Concat, Rule::Ds];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Whole => "whole",
            Rule::Concat => "concat",
            Rule::Ds => "ds",
        }
    }
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Euclid, Metric::Nn];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclid => "euclid",
            Metric::Nn => "nn",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown rule {s:?}")))
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric {s:?}")))
    }
}

/// How keypoints are laid out in the fused frame when a probe is compared
/// with a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DsAlignment {
    /// Slices paired by color divergence, matched keypoints first.
    #[default]
    Matched,
    /// Each template's own fused vector, keypoints in canonical order.
    Canonical,
}

/// A loaded ear image with its identity.
#[derive(Debug, Clone)]
pub struct EarImage {
    pub subject_id: String,
    pub instance: String,
    pub created_at: u64,
    pub image: ColorImage,
    pub mask: Mask,
}

/// A template plus the slice regions it was built from.
#[derive(Debug, Clone)]
pub struct Built {
    pub template: Template,
    pub slices: Vec<SliceRegion>,
}

/// Whole-image SIFT over the masked, equalized gray image.
pub fn whole_features(img: &ColorImage, mask: &Mask, config: &RunConfig) -> Result<FeatureSet> {
    let gray = imaging::decolorize_with(img, config.decolorizer);
    let gray = imaging::histogram_equalize_masked(&gray, mask)?;
    let features = extract_region_features(&gray, mask, (0, 0), &config.sift)?;
    FeatureSet::new(features, FeatureSource::Whole)
}

/// Dempster-Shafer combination of the per-slice sets. Empty slices carry
/// no evidence and are left out; `None` when nothing remains or the
/// slices conflict totally.
pub fn fuse_slices(sets: &[FeatureSet]) -> Option<MassFunction> {
    let informative: Vec<FeatureSet> = sets.iter().filter(|s| !s.is_empty()).cloned().collect();
    if informative.len() < sets.len() {
        log::warn!("{} empty slice sets left out of fusion", sets.len() - informative.len());
    }
    let padded = zero_pad_equalize(&informative).ok()?;
    let masses: Vec<MassFunction> = padded.iter().map(|v| to_mass(v)).collect::<Result<_>>().ok()?;
    match ds_fuse_all(&masses) {
        Ok(m) => Some(m),
        Err(e) => {
            log::warn!("fusion degenerate: {e}");
            None
        }
    }
}

/// Segments, slices and describes one image.
pub fn build_template(ear: &EarImage, config: &RunConfig) -> Result<Built> {
    let (img, mask) = (&ear.image, &ear.mask);
    let points = Points::from_rgb(&imaging::apply_mask(img, mask)?);
    let selection = mdl_select(&points, config.orders(), &config.fit())?;
    log::debug!("{}/{}: k = {}", ear.subject_id, ear.instance, selection.k);
    let gmm = selection.model().clone();
    let labels = assign_pixels(&gmm, img, mask)?;
    let slices = extract_slices(&labels, img, &config.slice_options())?;
    let per_slice = slices
        .iter()
        .map(|s| FeatureSet::new(extract_slice_features(s, &config.sift)?, FeatureSource::Slice(s.component_index)))
        .collect::<Result<Vec<_>>>()?;
    let concat_features = concat_fuse(&per_slice)?;
    let whole_features = whole_features(img, mask, config)?;
    let fused = fuse_slices(&per_slice);
    let template = Template {
        subject_id: ear.subject_id.clone(),
        instance: ear.instance.clone(),
        created_at: ear.created_at,
        width: img.width(),
        height: img.height(),
        gmm,
        slices: slices
            .iter()
            .map(|s| SliceSummary {
                component_index: s.component_index,
                pixel_count: s.pixel_coords.len(),
                bounding_box: s.bounding_box,
            })
            .collect(),
        per_slice_features: per_slice,
        concat_features,
        whole_features,
        fused,
    };
    template.validate()?;
    Ok(Built { template, slices })
}

fn slice_gaussians(t: &Template) -> Vec<Gaussian> {
    t.slices
        .iter()
        .map(|s| t.gmm.components()[s.component_index].gaussian.clone())
        .collect()
}

fn unit_l2(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Euclidean distance between fused vectors built over a frame shared by
/// the probe and the reference, each scaled to unit length so that how
/// peaked a combination is does not dominate; the result lies in
/// `[0, sqrt 2]`. Slices are paired by color divergence and pairs with an
/// empty side are left out.
pub fn ds_aligned_distance(probe: &Template, reference: &Template, config: &RunConfig) -> Result<f64> {
    let corr = correspond_slices(&slice_gaussians(reference), &slice_gaussians(probe))?;
    let mut pairs = corr.pairs;
    pairs.sort_by_key(|p| p.0);
    let mut ps = Vec::with_capacity(pairs.len());
    let mut rs = Vec::with_capacity(pairs.len());
    for (ri, pi, _) in pairs {
        let (p, r) = (&probe.per_slice_features[pi], &reference.per_slice_features[ri]);
        if p.is_empty() || r.is_empty() {
            continue;
        }
        let (pa, ra) = align_pair(p, r, config.ratio);
        ps.push(pa);
        rs.push(ra);
    }
    if ps.is_empty() {
        return Err(Error::NoFeatures);
    }
    let (sp, sr) = fuse_jointly(&ps, &rs)?;
    Ok(fusion::ds::euclidean(&unit_l2(sp.masses())?, &unit_l2(sr.masses())?))
}

fn ds_distance(probe: &Template, reference: &Template, config: &RunConfig) -> f64 {
    let d = match config.ds_alignment {
        DsAlignment::Matched => ds_aligned_distance(probe, reference, config).ok(),
        DsAlignment::Canonical => match (&probe.fused, &reference.fused) {
            (Some(a), Some(b)) => Some(fusion::ds::euclidean(a.masses(), b.masses())),
            _ => None,
        },
    };
    d.unwrap_or_else(|| {
        log::warn!("degenerate fusion for {} vs {}", probe.subject_id, reference.subject_id);
        f64::INFINITY
    })
}

fn pair_scores(p: &FeatureSet, r: &FeatureSet, config: &RunConfig) -> (f64, f64) {
    if p.is_empty() || r.is_empty() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let cfg = config.matching();
    let pairs = fusion::match_pairs(&p.features, &r.features, cfg.ratio);
    let nn = -(pairs.len() as f64);
    if pairs.len() < cfg.required_pairs(p.len(), r.len()) {
        return (f64::INFINITY, nn);
    }
    let sum: f64 = pairs.iter().map(|q| q.2).sum();
    (sum.sqrt() / pairs.len() as f64, nn)
}

fn pick(scores: (f64, f64), metric: Metric) -> f64 {
    match metric {
        Metric::Euclid => scores.0,
        Metric::Nn => scores.1,
    }
}

/// Dissimilarity of a probe to a reference; lower is better and `+inf`
/// marks a comparison that cannot succeed.
pub fn score(probe: &Template, reference: &Template, rule: Rule, metric: Metric, config: &RunConfig) -> f64 {
    match (rule, metric) {
        (Rule::Whole, _) => pick(pair_scores(&probe.whole_features, &reference.whole_features, config), metric),
        (Rule::Ds, Metric::Euclid) => ds_distance(probe, reference, config),
        // Pair count on the augmented sets for the fused rule.
        (Rule::Concat | Rule::Ds, _) => {
            pick(pair_scores(&probe.concat_features, &reference.concat_features, config), metric)
        }
    }
}

/// Every rule and metric at once, sharing the keypoint matching; ordered
/// as `Rule::ALL` by `Metric::ALL`.
pub fn score_all(probe: &Template, reference: &Template, config: &RunConfig) -> [(Rule, Metric, f64); 6] {
    let whole = pair_scores(&probe.whole_features, &reference.whole_features, config);
    let concat = pair_scores(&probe.concat_features, &reference.concat_features, config);
    [
        (Rule::Whole, Metric::Euclid, whole.0),
        (Rule::Whole, Metric::Nn, whole.1),
        (Rule::Concat, Metric::Euclid, concat.0),
        (Rule::Concat, Metric::Nn, concat.1),
        (Rule::Ds, Metric::Euclid, ds_distance(probe, reference, config)),
        (Rule::Ds, Metric::Nn, concat.1),
    ]
}

/// Acceptance threshold configured for a rule and metric.
pub fn threshold(rule: Rule, metric: Metric, config: &RunConfig) -> f64 {
    match (rule, metric) {
        (_, Metric::Nn) => -(config.min_pairs as f64),
        (Rule::Ds, Metric::Euclid) => config.phi,
        (_, Metric::Euclid) => config.psi,
    }
}
