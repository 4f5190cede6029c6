//! Seeded synthetic ear images: concentric, wobbly elliptical color bands
//! from a per-subject palette, overlaid with per-subject blob texture.
//! Probe instances get a small rigid jitter, a gain change and fresh noise.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{mask_to_image, save_png, ColorImage, Mask};
use crate::pipeline::EarImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subjects: usize,
    /// Index of the first subject; disjoint ranges give disjoint identities.
    pub first_subject: usize,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Standard deviation of the texture, in 8-bit levels.
    pub texture_contrast: f64,
    pub rotation_deg: f64,
    pub translation_px: f64,
    pub gain: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 20,
            first_subject: 0,
            width: 200,
            height: 240,
            bands: 4,
            texture_contrast: 15.0,
            rotation_deg: 2.0,
            translation_px: 2.0,
            gain: 0.04,
            noise_sigma: 2.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SynthConfig = toml::from_str(&text).map_err(|e| Error::parse("synthetic config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::InvalidConfig("subjects must be >= 1".into()));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::InvalidConfig("synthetic images must be at least 64x64".into()));
        }
        if !(2..=8).contains(&self.bands) {
            return Err(Error::InvalidConfig("bands must lie in 2..=8".into()));
        }
        let finite = [self.texture_contrast, self.rotation_deg, self.translation_px, self.gain, self.noise_sigma];
        if finite.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.gain >= 0.5 {
            return Err(Error::InvalidConfig("jitter parameters must be finite, >= 0, gain < 0.5".into()));
        }
        Ok(())
    }

    pub fn subject_id(&self, i: usize) -> String {
        format!("s{:03}", self.first_subject + i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instance {
    Reference,
    Probe,
}

impl Instance {
    pub fn dir_name(self) -> &'static str {
        match self {
            Instance::Reference => "ref",
            Instance::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x: f64,
    y: f64,
    inv_two_var: f64,
    radius2: f64,
    amplitude: f64,
}

const CELL: f64 = 24.0;

struct Identity {
    palette: Vec<[f64; 3]>,
    /// Outer normalized radius of each band.
    boundaries: Vec<f64>,
    wobble: [(f64, f64, f64); 2],
    cells: Vec<Vec<Blob>>,
    cols: usize,
    rows: usize,
    x0: f64,
    y0: f64,
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Identity {
    fn new(cfg: &SynthConfig, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, index as u64, 0));
        let k = cfg.bands;
        let h0 = rng.random::<f64>() * 360.0;
        let step = 360.0 / k as f64;
        let mut palette: Vec<[f64; 3]> = (0..k)
            .map(|i| {
                let h = h0 + i as f64 * step + (rng.random::<f64>() - 0.5) * 0.3 * step;
                hsv(h, 0.55 + 0.1 * rng.random::<f64>(), 0.6 + 0.1 * rng.random::<f64>())
            })
            .collect();
        // Shuffle so neighboring bands are not always neighboring hues.
        for i in (1..k).rev() {
            palette.swap(i, rng.random_range(0..=i));
        }
        // Band shares of the ellipse area; boundaries are radii.
        let mut widths: Vec<f64> = (0..k).map(|_| 0.8 + 0.4 * rng.random::<f64>()).collect();
        let total: f64 = widths.iter().sum();
        let mut acc = 0.0;
        for w in widths.iter_mut() {
            acc += *w / total;
            *w = acc.sqrt();
        }
        let wobble = [
            (0.04 + 0.04 * rng.random::<f64>(), 3.0, rng.random::<f64>() * std::f64::consts::TAU),
            (0.02 + 0.03 * rng.random::<f64>(), 5.0, rng.random::<f64>() * std::f64::consts::TAU),
        ];

        let margin = 12.0;
        let (x0, y0) = (-(cfg.width as f64) / 2.0 - margin, -(cfg.height as f64) / 2.0 - margin);
        let span_x = cfg.width as f64 + 2.0 * margin;
        let span_y = cfg.height as f64 + 2.0 * margin;
        let cols = (span_x / CELL).ceil() as usize;
        let rows = (span_y / CELL).ceil() as usize;
        let mut cells = vec![Vec::new(); cols * rows];
        // Dense overlapping blobs give a near-Gaussian field; the amplitude
        // scale makes its variance one.
        let density = 1.0 / 6.0;
        let mean_s2 = (3.5f64.powi(3) - 1.2f64.powi(3)) / (3.0 * 2.3);
        let unit = 1.0 / (density * std::f64::consts::PI * mean_s2 / 3.0).sqrt();
        let count = (span_x * span_y * density) as usize;
        for _ in 0..count {
            let x = x0 + rng.random::<f64>() * span_x;
            let y = y0 + rng.random::<f64>() * span_y;
            let s = 1.2 + 2.3 * rng.random::<f64>();
            let blob = Blob {
                x,
                y,
                inv_two_var: 1.0 / (2.0 * s * s),
                radius2: 16.0 * s * s,
                amplitude: unit * (2.0 * rng.random::<f64>() - 1.0),
            };
            let c = ((x - x0) / CELL) as usize;
            let r = ((y - y0) / CELL) as usize;
            cells[r.min(rows - 1) * cols + c.min(cols - 1)].push(blob);
        }
        Self {
            palette,
            boundaries: widths,
            wobble,
            cells,
            cols,
            rows,
            x0,
            y0,
        }
    }

    fn texture(&self, x: f64, y: f64) -> f64 {
        let c = ((x - self.x0) / CELL).floor() as isize;
        let r = ((y - self.y0) / CELL).floor() as isize;
        let mut v = 0.0;
        for rr in r - 1..=r + 1 {
            for cc in c - 1..=c + 1 {
                if rr < 0 || cc < 0 || rr >= self.rows as isize || cc >= self.cols as isize {
                    continue;
                }
                for b in &self.cells[rr as usize * self.cols + cc as usize] {
                    let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                    if d2 < b.radius2 {
                        v += b.amplitude * (-d2 * b.inv_two_var).exp();
                    }
                }
            }
        }
        v
    }

    fn band(&self, r: f64, theta: f64) -> usize {
        let w: f64 = self.wobble.iter().map(|(a, f, p)| a * (f * theta + p).sin()).sum();
        let rw = r * (1.0 + w);
        self.boundaries
            .iter()
            .position(|b| rw < *b)
            .unwrap_or(self.boundaries.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    angle: f64,
    tx: f64,
    ty: f64,
    gain: f64,
}

fn pose(cfg: &SynthConfig, instance: Instance, rng: &mut ChaCha8Rng) -> Pose {
    match instance {
        Instance::Reference => Pose {
            angle: 0.0,
            tx: 0.0,
            ty: 0.0,
            gain: 1.0,
        },
        Instance::Probe => {
            let mut sym = |m: f64| (2.0 * rng.random::<f64>() - 1.0) * m;
            Pose {
                angle: sym(cfg.rotation_deg).to_radians(),
                tx: sym(cfg.translation_px),
                ty: sym(cfg.translation_px),
                gain: 1.0 + sym(cfg.gain),
            }
        }
    }
}

const BACKGROUND: [f64; 3] = [24.0, 24.0, 24.0];

/// Renders one instance of subject `index` (relative to `first_subject`).
pub fn render(cfg: &SynthConfig, index: usize, instance: Instance) -> Result<EarImage> {
    cfg.validate()?;
    let absolute = cfg.first_subject + index;
    let id = Identity::new(cfg, absolute);
    let salt = match instance {
        Instance::Reference => 1,
        Instance::Probe => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, absolute as u64, salt));
    let p = pose(cfg, instance, &mut rng);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(1e-12)).expect("finite sigma");
    let (w, h) = (cfg.width, cfg.height);
    let (a, b) = (0.42 * w as f64, 0.44 * h as f64);
    let (cos, sin) = (p.angle.cos(), p.angle.sin());
    let mut pixels = Vec::with_capacity(w * h);
    let mut bits = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            // Inverse rigid map into the canonical frame.
            let dx = x as f64 - w as f64 / 2.0 - p.tx;
            let dy = y as f64 - h as f64 / 2.0 - p.ty;
            let cx = cos * dx + sin * dy;
            let cy = -sin * dx + cos * dy;
            let r = ((cx / a).powi(2) + (cy / b).powi(2)).sqrt();
            let inside = r <= 1.0;
            let base = if inside {
                let band = id.band(r, (cy / b).atan2(cx / a));
                let t = cfg.texture_contrast * id.texture(cx, cy);
                let c = id.palette[band];
                [c[0] + t, c[1] + t, c[2] + t]
            } else {
                BACKGROUND
            };
            let mut px = [0u8; 3];
            for (o, v) in px.iter_mut().zip(base) {
                let n = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                *o = (p.gain * v + n).round().clamp(0.0, 255.0) as u8;
            }
            pixels.push(px);
            bits.push(inside);
        }
    }
    Ok(EarImage {
        subject_id: cfg.subject_id(index),
        instance: instance.dir_name().to_string(),
        created_at: 0,
        image: ColorImage::new(w, h, pixels)?,
        mask: Mask::new(w, h, bits)?,
    })
}

/// Writes `root/{subject}/{ref,probe}/{subject}_{instance}.png` plus a
/// `.mask.png` beside each image. Returns the subject ids.
pub fn generate(root: impl AsRef<Path>, cfg: &SynthConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let root = root.as_ref();
    (0..cfg.subjects)
        .into_par_iter()
        .map(|i| {
            let id = cfg.subject_id(i);
            for instance in [Instance::Reference, Instance::Probe] {
                let ear = render(cfg, i, instance)?;
                let dir = root.join(&id).join(instance.dir_name());
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let stem = format!("{id}_{}", instance.dir_name());
                save_png(&ear.image, dir.join(format!("{stem}.png")))?;
                save_png(&mask_to_image(&ear.mask), dir.join(format!("{stem}.mask.png")))?;
            }
            Ok(id)
        })
        .collect()
}
