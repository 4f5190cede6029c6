//! Dempster-Shafer fusion over frames of singleton hypotheses, one per
//! padded descriptor dimension.

use super::FeatureSet;
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Basic probability assignment over `masses.len()` singletons.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction {
    masses: Vec<f64>,
}

impl MassFunction {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::ZeroMass);
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidConfig("masses must be finite and non-negative".into()));
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!("masses sum to {sum}")));
        }
        Ok(Self { masses })
    }

    pub fn frame_size(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.masses
    }
}

/// The fused representative: a combined mass vector.
pub type FusedVector = MassFunction;

/// Flattens each set's descriptors in canonical order and pads with zeros
/// to the longest.
pub fn zero_pad_equalize(sets: &[FeatureSet]) -> Result<Vec<Vec<f64>>> {
    let longest = sets.iter().map(FeatureSet::len).max().ok_or(Error::NoFeatures)?;
    if longest == 0 {
        return Err(Error::NoFeatures);
    }
    let len = longest * crate::sift::DESCRIPTOR_LEN;
    Ok(sets
        .iter()
        .map(|s| {
            if s.is_empty() {
                log::warn!("zero padding an empty feature set");
            }
            let mut v: Vec<f64> = s.features.iter().flat_map(|f| f.descriptor.iter().map(|&d| d as f64)).collect();
            v.resize(len, 0.0);
            v
        })
        .collect())
}

/// Pads `v` with zeros to `len`.
pub fn pad_to(v: &[f64], len: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(len.max(v.len()), 0.0);
    out
}

/// Scales a non-negative vector to `[0, 1]` by its maximum, then to unit sum.
pub fn to_mass(v: &[f64]) -> Result<MassFunction> {
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidConfig("mass source must be finite and non-negative".into()));
    }
    let max = v.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::ZeroMass);
    }
    let scaled: Vec<f64> = v.iter().map(|x| x / max).collect();
    let sum: f64 = scaled.iter().sum();
    Ok(MassFunction {
        masses: scaled.iter().map(|x| x / sum).collect(),
    })
}

/// Dempster's rule on singleton frames: normalized elementwise product.
pub fn ds_combine_pair(m1: &MassFunction, m2: &MassFunction) -> Result<MassFunction> {
    if m1.frame_size() != m2.frame_size() {
        return Err(Error::dims(m1.frame_size(), m2.frame_size()));
    }
    let products: Vec<f64> = m1.masses.iter().zip(&m2.masses).map(|(a, b)| a * b).collect();
    let agreement: f64 = products.iter().sum();
    if !(agreement > 0.0) {
        return Err(Error::TotalConflict);
    }
    Ok(MassFunction {
        masses: products.iter().map(|p| p / agreement).collect(),
    })
}

/// Combines consecutive pairs, passes an odd leftover through, then folds
/// the partial results left to right.
pub fn ds_fuse_all(masses: &[MassFunction]) -> Result<FusedVector> {
    let (first, _) = masses.split_first().ok_or(Error::NoFeatures)?;
    if let Some(m) = masses.iter().find(|m| m.frame_size() != first.frame_size()) {
        return Err(Error::dims(first.frame_size(), m.frame_size()));
    }
    let partial: Vec<MassFunction> = masses
        .chunks(2)
        .map(|c| match c {
            [a, b] => ds_combine_pair(a, b),
            [a] => Ok(a.clone()),
            _ => unreachable!(),
        })
        .collect::<Result<_>>()?;
    let mut acc = partial[0].clone();
    for m in &partial[1..] {
        acc = ds_combine_pair(&acc, m)?;
    }
    Ok(acc)
}

/// Reorders two sets so that mutually matched keypoints share a position:
/// matched pairs first, in reference order, then the unmatched features of
/// each side in their existing order.
pub fn align_pair(probe: &FeatureSet, reference: &FeatureSet, ratio: f64) -> (FeatureSet, FeatureSet) {
    let mut pairs = super::match_pairs(&probe.features, &reference.features, ratio);
    pairs.sort_by_key(|p| p.1);
    let mut used_p = vec![false; probe.len()];
    let mut used_r = vec![false; reference.len()];
    let mut p_out = Vec::with_capacity(probe.len());
    let mut r_out = Vec::with_capacity(reference.len());
    for &(i, j, _) in &pairs {
        used_p[i] = true;
        used_r[j] = true;
        p_out.push(probe.features[i].clone());
        r_out.push(reference.features[j].clone());
    }
    p_out.extend(probe.features.iter().zip(&used_p).filter(|(_, u)| !**u).map(|(f, _)| f.clone()));
    r_out.extend(reference.features.iter().zip(&used_r).filter(|(_, u)| !**u).map(|(f, _)| f.clone()));
    (
        FeatureSet {
            features: p_out,
            source: probe.source,
        },
        FeatureSet {
            features: r_out,
            source: reference.source,
        },
    )
}

/// Fuses corresponding slice sets of a probe and a reference over one
/// common frame and returns the two fused vectors.
pub fn fuse_jointly(probe: &[FeatureSet], reference: &[FeatureSet]) -> Result<(FusedVector, FusedVector)> {
    if probe.len() != reference.len() {
        return Err(Error::dims(reference.len(), probe.len()));
    }
    let all: Vec<FeatureSet> = probe.iter().chain(reference).cloned().collect();
    let padded = zero_pad_equalize(&all)?;
    let masses = padded.iter().map(|v| to_mass(v)).collect::<Result<Vec<_>>>()?;
    let (p, r) = masses.split_at(probe.len());
    Ok((ds_fuse_all(p)?, ds_fuse_all(r)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsMatch {
    pub distance: f64,
    pub accept: bool,
}

/// Euclidean distance between fused vectors of equal length.
pub fn ds_match(s1: &FusedVector, s2: &FusedVector, phi: f64) -> Result<DsMatch> {
    if s1.frame_size() != s2.frame_size() {
        return Err(Error::dims(s1.frame_size(), s2.frame_size()));
    }
    let distance = euclidean(&s1.masses, &s2.masses);
    Ok(DsMatch {
        distance,
        accept: distance <= phi,
    })
}

/// Euclidean distance with the shorter vector implicitly zero-padded.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let mut sum = 0.0;
    for i in 0..n {
        let d = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
        sum += d * d;
    }
    sum.sqrt()
}
