//! Feature-level fusion of per-slice SIFT sets: concatenation with
//! keypoint-pair matching, and Dempster-Shafer combination.

pub mod discrete;
pub mod ds;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sift::{sort_canonical, SiftFeature, DESCRIPTOR_LEN};

pub use discrete::DiscreteMass;
pub use ds::{
    align_pair, ds_combine_pair, ds_fuse_all, ds_match, fuse_jointly, to_mass, zero_pad_equalize, DsMatch, FusedVector,
    MassFunction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    Slice(usize),
    /// Union of several slices.
    Augmented,
    /// Whole image, no segmentation.
    Whole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<SiftFeature>,
    pub source: FeatureSource,
}

impl FeatureSet {
    pub fn new(features: Vec<SiftFeature>, source: FeatureSource) -> Result<Self> {
        if let Some(f) = features.iter().find(|f| f.descriptor.len() != DESCRIPTOR_LEN) {
            return Err(Error::dims(DESCRIPTOR_LEN, f.descriptor.len()));
        }
        Ok(Self { features, source })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Union of all sets with exact duplicates removed, in canonical order.
pub fn concat_fuse(sets: &[FeatureSet]) -> Result<FeatureSet> {
    if sets.is_empty() {
        return Err(Error::NoFeatures);
    }
    let mut all: Vec<SiftFeature> = sets.iter().flat_map(|s| s.features.iter().cloned()).collect();
    sort_canonical(&mut all);
    all.dedup();
    if all.is_empty() {
        log::warn!("augmented feature set is empty");
    }
    FeatureSet::new(all, FeatureSource::Augmented)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Lowe ratio between nearest and second-nearest descriptor distances.
    pub ratio: f64,
    pub min_pairs: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            min_pairs: 4,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::InvalidConfig("ratio must lie in (0, 1]".into()));
        }
        if self.min_pairs == 0 {
            return Err(Error::InvalidConfig("min_pairs must be >= 1".into()));
        }
        Ok(())
    }

    /// Pair count needed for acceptance between sets of the given sizes;
    /// never more than the smaller set can supply.
    pub fn required_pairs(&self, probe_len: usize, reference_len: usize) -> usize {
        self.min_pairs.min(probe_len).min(reference_len).max(1)
    }
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (*x - *y) as f64;
            d * d
        })
        .sum()
}

/// Mutual nearest-neighbor keypoint pairs passing the ratio test, as
/// `(probe index, reference index, squared distance)`.
pub fn match_pairs(probe: &[SiftFeature], reference: &[SiftFeature], ratio: f64) -> Vec<(usize, usize, f64)> {
    if probe.is_empty() || reference.is_empty() {
        return Vec::new();
    }
    let m = reference.len();
    let dist: Vec<f64> = probe
        .iter()
        .flat_map(|p| reference.iter().map(move |r| squared_distance(&p.descriptor, &r.descriptor)))
        .collect();
    // Nearest probe for every reference feature, lowest index on ties.
    let mut back = vec![(usize::MAX, f64::INFINITY); m];
    for i in 0..probe.len() {
        for j in 0..m {
            if dist[i * m + j] < back[j].1 {
                back[j] = (i, dist[i * m + j]);
            }
        }
    }
    let ratio2 = ratio * ratio;
    let mut pairs = Vec::new();
    for i in 0..probe.len() {
        let row = &dist[i * m..(i + 1) * m];
        let (mut best, mut second) = ((usize::MAX, f64::INFINITY), f64::INFINITY);
        for (j, &d) in row.iter().enumerate() {
            if d < best.1 {
                second = best.1;
                best = (j, d);
            } else if d < second {
                second = d;
            }
        }
        if best.1 <= ratio2 * second && back[best.0].0 == i {
            pairs.push((i, best.0, best.1));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcatMatch {
    /// Root of summed squared pair distances divided by the pair count;
    /// infinite when nothing pairs.
    pub distance: f64,
    pub accept: bool,
    pub pairs: usize,
}

pub fn concat_match(probe: &FeatureSet, reference: &FeatureSet, psi: f64, config: &MatchConfig) -> Result<ConcatMatch> {
    if probe.is_empty() || reference.is_empty() {
        return Err(Error::NoFeatures);
    }
    let pairs = match_pairs(&probe.features, &reference.features, config.ratio);
    if pairs.is_empty() {
        return Ok(ConcatMatch {
            distance: f64::INFINITY,
            accept: false,
            pairs: 0,
        });
    }
    let sum: f64 = pairs.iter().map(|p| p.2).sum();
    let distance = sum.sqrt() / pairs.len() as f64;
    let accept = distance <= psi && pairs.len() >= config.required_pairs(probe.len(), reference.len());
    Ok(ConcatMatch {
        distance,
        accept,
        pairs: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_feature(rng: &mut ChaCha8Rng, x: f32) -> SiftFeature {
        let raw: Vec<f32> = (0..DESCRIPTOR_LEN).map(|_| rng.random::<f32>()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f32>().sqrt();
        SiftFeature {
            x,
            y: rng.random::<f32>() * 100.0,
            scale: 2.0,
            orientation: 1.0,
            descriptor: raw.iter().map(|v| v / norm).collect(),
            octave: 0,
            layer: 1,
        }
    }

    fn set(rng: &mut ChaCha8Rng, n: usize, x0: f32) -> FeatureSet {
        FeatureSet::new((0..n).map(|i| random_feature(rng, x0 + i as f32)).collect(), FeatureSource::Slice(0)).unwrap()
    }

    #[test]
    fn union_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sets = [set(&mut rng, 5, 0.0), set(&mut rng, 3, 10.0), set(&mut rng, 7, 20.0)];
        assert_eq!(concat_fuse(&sets).unwrap().len(), 15);
        let single = concat_fuse(&sets[..1]).unwrap();
        let mut sorted = sets[0].features.clone();
        sort_canonical(&mut sorted);
        assert_eq!(single.features, sorted);
        assert_eq!(single.source, FeatureSource::Augmented);

        let a = set(&mut rng, 6, 0.0);
        let mut b = set(&mut rng, 4, 50.0);
        b.features.extend(a.features[1..3].iter().cloned());
        assert_eq!(concat_fuse(&[a.clone(), b.clone()]).unwrap().len(), 6 + 6 - 2);
        assert!(concat_fuse(&[]).is_err());
    }

    #[test]
    fn self_match_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 3, 20] {
            let s = set(&mut rng, n, 0.0);
            let m = concat_match(&s, &s, 0.0, &MatchConfig::default()).unwrap();
            assert_eq!(m.distance, 0.0);
            assert!(m.accept);
            assert_eq!(m.pairs, n);
        }
    }

    #[test]
    fn perturbed_pairs_match_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = set(&mut rng, 10, 0.0);
        let mut probe = reference.clone();
        for f in probe.features.iter_mut() {
            // Perturbation of norm exactly 0.1 along a random unit direction.
            let dir: Vec<f32> = (0..DESCRIPTOR_LEN).map(|_| rng.random::<f32>() - 0.5).collect();
            let n = dir.iter().map(|v| v * v).sum::<f32>().sqrt();
            for (d, v) in f.descriptor.iter_mut().zip(&dir) {
                *d += 0.1 * v / n;
            }
        }
        let m = concat_match(&probe, &reference, 1.0, &MatchConfig::default()).unwrap();
        // Brute force: exhaustive nearest search, no shortcuts.
        let mut sum = 0.0;
        let mut count = 0;
        for (i, p) in probe.features.iter().enumerate() {
            let d: Vec<f64> = reference.features.iter().map(|r| squared_distance(&p.descriptor, &r.descriptor)).collect();
            let j = (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            assert_eq!(i, j);
            sum += d[j];
            count += 1;
        }
        assert_eq!(m.pairs, count);
        assert!((m.distance - sum.sqrt() / count as f64).abs() < 1e-9);
        assert!((m.distance - 0.1 / 10f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn random_sets_rarely_pair() {
        let cfg = MatchConfig::default();
        let mut total = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let a = set(&mut rng, 30, 0.0);
            let b = set(&mut rng, 30, 0.0);
            let m = concat_match(&a, &b, 1.0, &cfg).unwrap();
            assert!(!m.accept);
            total += m.pairs;
        }
        assert_eq!(total, 0);
    }

    #[test]
    fn empty_sets_error() {
        let empty = FeatureSet::new(vec![], FeatureSource::Augmented).unwrap();
        assert!(concat_match(&empty, &empty, 1.0, &MatchConfig::default()).is_err());
    }
}
