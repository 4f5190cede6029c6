use std::f64::consts::TAU;

use super::keypoints::Keypoint;
use super::scale_space::{Plane, ScaleSpace};
use super::SiftConfig;

pub const ORIENTATION_BINS: usize = 36;
const WINDOW_FACTOR: f64 = 1.5;
const RADIUS_FACTOR: f64 = 3.0;

/// Gaussian-weighted gradient-orientation histogram around `(x, y)`, with
/// each vote split linearly between the two nearest bins.
pub fn orientation_histogram(img: &Plane, x: usize, y: usize, sigma: f64) -> [f64; ORIENTATION_BINS] {
    let mut hist = [0.0; ORIENTATION_BINS];
    let window = WINDOW_FACTOR * sigma;
    let radius = (RADIUS_FACTOR * window).round() as isize;
    let denom = 2.0 * window * window;
    let (w, h) = (img.width as isize, img.height as isize);
    for dy in -radius..=radius {
        let yy = y as isize + dy;
        if yy <= 0 || yy >= h - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = x as isize + dx;
            if xx <= 0 || xx >= w - 1 {
                continue;
            }
            let (xu, yu) = (xx as usize, yy as usize);
            let gx = (img.at(xu + 1, yu) - img.at(xu - 1, yu)) as f64;
            let gy = (img.at(xu, yu + 1) - img.at(xu, yu - 1)) as f64;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-((dx * dx + dy * dy) as f64) / denom).exp();
            let pos = gy.atan2(gx).rem_euclid(TAU) / TAU * ORIENTATION_BINS as f64;
            let b0 = pos.floor();
            let frac = pos - b0;
            let b0 = b0 as usize % ORIENTATION_BINS;
            let b1 = (b0 + 1) % ORIENTATION_BINS;
            hist[b0] += weight * mag * (1.0 - frac);
            hist[b1] += weight * mag * frac;
        }
    }
    hist
}

fn smooth(hist: &[f64; ORIENTATION_BINS]) -> [f64; ORIENTATION_BINS] {
    let n = ORIENTATION_BINS;
    let mut out = [0.0; ORIENTATION_BINS];
    for i in 0..n {
        out[i] = (hist[(i + n - 2) % n] + hist[(i + 2) % n]) / 16.0
            + (hist[(i + n - 1) % n] + hist[(i + 1) % n]) * 4.0 / 16.0
            + hist[i] * 6.0 / 16.0;
    }
    out
}

/// Angles in `[0, 2pi)` of every smoothed-histogram peak reaching
/// `peak_ratio` of the maximum, parabola-interpolated.
pub fn dominant_orientations(hist: &[f64; ORIENTATION_BINS], peak_ratio: f64) -> Vec<f64> {
    let n = ORIENTATION_BINS;
    let hist = smooth(hist);
    let max = hist.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let (l, c, r) = (hist[(i + n - 1) % n], hist[i], hist[(i + 1) % n]);
        // A plateau of two equal bins counts once, at its lower bin.
        if c > l && c >= r && c >= peak_ratio * max {
            let denom = l - 2.0 * c + r;
            let shift = if denom != 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
            let bin = i as f64 + shift;
            let mut angle = (bin / n as f64 * TAU).rem_euclid(TAU);
            if angle >= TAU {
                angle = 0.0;
            }
            out.push(angle);
        }
    }
    out
}

/// Orientations for a localized keypoint; empty when the window is flat.
pub fn assign_orientations(kp: &Keypoint, ss: &ScaleSpace, config: &SiftConfig) -> Vec<f64> {
    let img = &ss.octaves[kp.octave].gaussians[kp.layer];
    let hist = orientation_histogram(img, kp.xi, kp.yi, kp.octave_scale);
    dominant_orientations(&hist, config.orientation_peak_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(n: usize, f: impl Fn(f64, f64) -> f64) -> Plane {
        let mut data = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                data.push(f(x as f64, y as f64) as f32);
            }
        }
        Plane {
            width: n,
            height: n,
            data,
        }
    }

    #[test]
    fn ramp_gives_its_gradient_direction() {
        for deg in [0.0f64, 17.0, 45.0, 100.0, 222.0, 301.5] {
            let phi = deg.to_radians();
            let p = plane(41, |x, y| 0.5 + 0.01 * (x * phi.cos() + y * phi.sin()));
            let hist = orientation_histogram(&p, 20, 20, 2.0);
            let found = dominant_orientations(&hist, 0.8);
            assert_eq!(found.len(), 1, "{deg}: {found:?}");
            let err = (found[0] - phi).rem_euclid(TAU);
            let err = err.min(TAU - err).to_degrees();
            assert!(err < 5.0, "{deg}: off by {err}");
        }
    }

    #[test]
    fn perpendicular_populations_give_two_orientations() {
        // max(x, y) ramps along x below the diagonal and along y above it.
        let p = plane(41, |x, y| 0.01 * x.max(y));
        let hist = orientation_histogram(&p, 20, 20, 2.0);
        let found = dominant_orientations(&hist, 0.8);
        assert_eq!(found.len(), 2, "{found:?}");
    }

    #[test]
    fn flat_window_has_no_orientation() {
        let p = plane(41, |_, _| 0.3);
        assert!(dominant_orientations(&orientation_histogram(&p, 20, 20, 2.0), 0.8).is_empty());
    }
}
