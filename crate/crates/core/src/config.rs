//! Run configuration, read from TOML.

use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::MatchConfig;
use crate::gmm::{FitConfig, MAX_COMPONENTS};
use crate::imaging::Decolorizer;
use crate::pipeline::DsAlignment;
use crate::segmentation::{SliceOptions, DEFAULT_MIN_SLICE_PIXELS};
use crate::sift::SiftConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmSection {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub covariance_floor: f64,
    /// Fit on every n-th masked pixel.
    pub pixel_stride: usize,
    pub restarts: usize,
}

impl Default for EmSection {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-5,
            covariance_floor: 1.0,
            pixel_stride: 8,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Acceptance threshold for concatenated-feature distances.
    pub psi: f64,
    /// Acceptance threshold for fused-vector distances.
    pub phi: f64,
    pub ratio: f64,
    pub min_pairs: usize,
    pub seed: u64,
    pub min_slice_pixels: usize,
    pub mdl_range: [usize; 2],
    pub decolorizer: Decolorizer,
    pub ds_alignment: DsAlignment,
    pub em: EmSection,
    pub sift: SiftConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MatchConfig::default();
        Self {
            psi: 0.08,
            phi: 0.8,
            ratio: m.ratio,
            min_pairs: m.min_pairs,
            seed: 7,
            min_slice_pixels: DEFAULT_MIN_SLICE_PIXELS,
            mdl_range: [3, 6],
            decolorizer: Decolorizer::Luminance,
            ds_alignment: DsAlignment::Matched,
            em: EmSection::default(),
            sift: SiftConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse("run config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi > 0.0) || !(self.phi > 0.0) {
            return Err(Error::InvalidConfig("psi and phi must be > 0".into()));
        }
        let [lo, hi] = self.mdl_range;
        if lo == 0 || lo > hi || hi > MAX_COMPONENTS {
            return Err(Error::InvalidConfig(format!("mdl_range [{lo}, {hi}] outside [1, {MAX_COMPONENTS}]")));
        }
        if self.min_slice_pixels == 0 {
            return Err(Error::InvalidConfig("min_slice_pixels must be >= 1".into()));
        }
        self.matching().validate()?;
        self.fit().validate()?;
        self.sift.validate()
    }

    pub fn matching(&self) -> MatchConfig {
        MatchConfig {
            ratio: self.ratio,
            min_pairs: self.min_pairs,
        }
    }

    pub fn fit(&self) -> FitConfig {
        FitConfig {
            max_iterations: self.em.max_iterations,
            tolerance: self.em.tolerance,
            covariance_floor: self.em.covariance_floor,
            seed: self.seed,
            stride: self.em.pixel_stride,
            restarts: self.em.restarts,
        }
    }

    pub fn orders(&self) -> RangeInclusive<usize> {
        self.mdl_range[0]..=self.mdl_range[1]
    }

    pub fn slice_options(&self) -> SliceOptions {
        SliceOptions {
            min_pixels: self.min_slice_pixels,
            decolorizer: self.decolorizer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = RunConfig::from_toml("psi = 0.2\n[sift]\ncontrast_threshold = 0.02\n").unwrap();
        assert_eq!(partial.psi, 0.2);
        assert_eq!(partial.sift.contrast_threshold, 0.02);
        assert_eq!(partial.phi, cfg.phi);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("psi = 0.0").is_err());
        assert!(RunConfig::from_toml("mdl_range = [0, 6]").is_err());
        assert!(RunConfig::from_toml("mdl_range = [3, 17]").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("ratio = 1.5").is_err());
    }
}
