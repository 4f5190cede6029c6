//! Mass functions over arbitrary subsets of a small frame, with subsets
//! encoded as bitmasks.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const MAX_FRAME: usize = 16;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMass {
    frame: usize,
    focal: BTreeMap<u32, f64>,
}

fn full_mask(frame: usize) -> u32 {
    if frame == 32 {
        u32::MAX
    } else {
        (1u32 << frame) - 1
    }
}

impl DiscreteMass {
    /// Zero masses are dropped; the empty set may not carry mass.
    pub fn new(frame: usize, focal: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        if frame == 0 || frame > MAX_FRAME {
            return Err(Error::InvalidConfig(format!("frame size {frame} outside 1..={MAX_FRAME}")));
        }
        let full = full_mask(frame);
        let mut map = BTreeMap::new();
        for (subset, m) in focal {
            if subset & !full != 0 {
                return Err(Error::OutsideFrame { subset, frame });
            }
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidConfig(format!("mass {m} for subset {subset:#b}")));
            }
            if m == 0.0 {
                continue;
            }
            if subset == 0 {
                return Err(Error::InvalidConfig("the empty set carries mass".into()));
            }
            *map.entry(subset).or_insert(0.0) += m;
        }
        let sum: f64 = map.values().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!("masses sum to {sum}")));
        }
        Ok(Self { frame, focal: map })
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn full(&self) -> u32 {
        full_mask(self.frame)
    }

    pub fn focal(&self) -> &BTreeMap<u32, f64> {
        &self.focal
    }

    pub fn mass(&self, subset: u32) -> f64 {
        self.focal.get(&subset).copied().unwrap_or(0.0)
    }

    pub fn complement(&self, subset: u32) -> u32 {
        !subset & self.full()
    }

    fn check(&self, subset: u32) -> Result<()> {
        if subset & !self.full() != 0 {
            return Err(Error::OutsideFrame {
                subset,
                frame: self.frame,
            });
        }
        Ok(())
    }

    /// Total mass of focal sets contained in `a`.
    pub fn belief(&self, a: u32) -> Result<f64> {
        self.check(a)?;
        Ok(self.focal.iter().filter(|(b, _)| *b & !a == 0).map(|(_, m)| m).sum())
    }

    /// Total mass of focal sets meeting `a`.
    pub fn plausibility(&self, a: u32) -> Result<f64> {
        self.check(a)?;
        Ok(self.focal.iter().filter(|(b, _)| *b & a != 0).map(|(_, m)| m).sum())
    }

    /// Belief of every subset, indexed by bitmask.
    pub fn belief_table(&self) -> Vec<f64> {
        (0..=self.full()).map(|a| self.belief(a).expect("in frame")).collect()
    }

    /// Dempster's orthogonal sum for arbitrary focal sets.
    pub fn combine(&self, other: &DiscreteMass) -> Result<DiscreteMass> {
        if self.frame != other.frame {
            return Err(Error::dims(self.frame, other.frame));
        }
        let mut joint: BTreeMap<u32, f64> = BTreeMap::new();
        let mut conflict = 0.0;
        for (&a, &ma) in &self.focal {
            for (&b, &mb) in &other.focal {
                let c = a & b;
                if c == 0 {
                    conflict += ma * mb;
                } else {
                    *joint.entry(c).or_insert(0.0) += ma * mb;
                }
            }
        }
        let norm = 1.0 - conflict;
        if !(norm > 0.0) || joint.is_empty() {
            return Err(Error::TotalConflict);
        }
        let total: f64 = joint.values().sum();
        DiscreteMass::new(self.frame, joint.into_iter().map(|(k, v)| (k, v / total)))
    }
}

/// Recovers masses from a complete belief table by Moebius inversion.
pub fn mass_from_belief(frame: usize, bel: &[f64]) -> Result<DiscreteMass> {
    if frame == 0 || frame > MAX_FRAME {
        return Err(Error::InvalidConfig(format!("frame size {frame} outside 1..={MAX_FRAME}")));
    }
    let size = 1usize << frame;
    if bel.len() != size {
        return Err(Error::dims(size, bel.len()));
    }
    let mut focal = Vec::new();
    for a in 1..size as u32 {
        // Sum over all subsets b of a, signed by |a \ b|.
        let mut m = 0.0;
        let mut b = a;
        loop {
            let sign = if (a & !b).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            m += sign * bel[b as usize];
            if b == 0 {
                break;
            }
            b = (b - 1) & a;
        }
        if m < -1e-9 {
            return Err(Error::InconsistentBelief { subset: a, mass: m });
        }
        focal.push((a, m.max(0.0)));
    }
    if bel[0].abs() > 1e-9 {
        return Err(Error::InconsistentBelief { subset: 0, mass: bel[0] });
    }
    DiscreteMass::new(frame, focal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DiscreteMass {
        DiscreteMass::new(3, [(0b001, 0.2), (0b011, 0.3), (0b111, 0.5)]).unwrap()
    }

    #[test]
    fn belief_and_plausibility_bounds() {
        let m = sample();
        assert!((m.belief(0b111).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.plausibility(0).unwrap(), 0.0);
        assert!((m.belief(0b011).unwrap() - 0.5).abs() < 1e-12);
        assert!((m.plausibility(0b100).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(m.belief(0b1000), Err(Error::OutsideFrame { .. })));
    }

    #[test]
    fn moebius_roundtrip() {
        let m = sample();
        let back = mass_from_belief(3, &m.belief_table()).unwrap();
        for (k, v) in m.focal() {
            assert!((back.mass(*k) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_beliefs_rejected() {
        // Bel({a}) + Bel({b}) > Bel({a,b}) forces a negative mass.
        let bel = vec![0.0, 0.6, 0.6, 0.7];
        assert!(matches!(mass_from_belief(2, &bel), Err(Error::InconsistentBelief { .. })));
    }

    #[test]
    fn validation() {
        assert!(DiscreteMass::new(2, [(0b100, 1.0)]).is_err());
        assert!(DiscreteMass::new(2, [(0, 0.5), (1, 0.5)]).is_err());
        assert!(DiscreteMass::new(2, [(1, 0.5)]).is_err());
    }

    #[test]
    fn general_rule_reduces_to_singleton_product() {
        let a = DiscreteMass::new(2, [(0b01, 0.9), (0b10, 0.1)]).unwrap();
        let b = DiscreteMass::new(2, [(0b01, 0.8), (0b10, 0.2)]).unwrap();
        let c = a.combine(&b).unwrap();
        assert!((c.mass(0b01) - 0.72 / 0.74).abs() < 1e-12);
        let x = DiscreteMass::new(2, [(0b01, 1.0)]).unwrap();
        let y = DiscreteMass::new(2, [(0b10, 1.0)]).unwrap();
        assert!(matches!(x.combine(&y), Err(Error::TotalConflict)));
    }
}
