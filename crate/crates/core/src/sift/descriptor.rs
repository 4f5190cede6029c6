use std::f64::consts::{SQRT_2, TAU};

use super::keypoints::Keypoint;
use super::scale_space::{Plane, ScaleSpace};
use super::SiftConfig;

pub const DESCRIPTOR_LEN: usize = 128;
pub const GRID: usize = 4;
pub const ANGLE_BINS: usize = 8;
/// Width of one spatial cell in units of the keypoint scale.
pub const CELL_WIDTH_FACTOR: f64 = 3.0;

/// Half-width, in octave pixels, of the region sampled for a descriptor.
pub fn window_radius(octave_scale: f64) -> f64 {
    CELL_WIDTH_FACTOR * octave_scale * SQRT_2 * (GRID as f64 + 1.0) * 0.5
}

/// Raw 4x4x8 gradient histogram around `(x, y)` rotated by `angle`,
/// before normalization.
pub fn raw_descriptor(img: &Plane, x: f64, y: f64, octave_scale: f64, angle: f64) -> [f64; DESCRIPTOR_LEN] {
    let d = GRID as f64;
    let n = ANGLE_BINS as f64;
    let cell = CELL_WIDTH_FACTOR * octave_scale;
    let radius = window_radius(octave_scale).round() as isize;
    let (cos_t, sin_t) = (angle.cos() / cell, angle.sin() / cell);
    let (xi, yi) = (x.round() as isize, y.round() as isize);
    let (fx, fy) = (x - xi as f64, y - yi as f64);
    let mut hist = [0.0f64; (GRID + 2) * (GRID + 2) * (ANGLE_BINS + 2)];
    let idx = |r: usize, c: usize, o: usize| (r * (GRID + 2) + c) * (ANGLE_BINS + 2) + o;
    let weight_denom = 2.0 * (0.5 * d) * (0.5 * d);

    for i in -radius..=radius {
        for j in -radius..=radius {
            let (dxp, dyp) = (j as f64 - fx, i as f64 - fy);
            // Image offset expressed in the keypoint's rotated frame, in cells.
            let c_rot = dxp * cos_t + dyp * sin_t;
            let r_rot = -dxp * sin_t + dyp * cos_t;
            let rbin = r_rot + 0.5 * d - 0.5;
            let cbin = c_rot + 0.5 * d - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let (px, py) = (xi + j, yi + i);
            let gx = (img.at_clamped(px + 1, py) - img.at_clamped(px - 1, py)) as f64;
            let gy = (img.at_clamped(px, py + 1) - img.at_clamped(px, py - 1)) as f64;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(c_rot * c_rot + r_rot * r_rot) / weight_denom).exp();
            let obin = (gy.atan2(gx) - angle).rem_euclid(TAU) / TAU * n;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (dr, dc, d_o) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0) = ((r0 + 1.0) as usize, (c0 + 1.0) as usize);
            let o0 = o0 as usize % ANGLE_BINS;
            let v = mag * weight;
            for (ri, wr) in [(0, 1.0 - dr), (1, dr)] {
                let vr = v * wr;
                for (ci, wc) in [(0, 1.0 - dc), (1, dc)] {
                    let vc = vr * wc;
                    hist[idx(r0 + ri, c0 + ci, o0)] += vc * (1.0 - d_o);
                    hist[idx(r0 + ri, c0 + ci, o0 + 1)] += vc * d_o;
                }
            }
        }
    }

    let mut out = [0.0f64; DESCRIPTOR_LEN];
    for r in 0..GRID {
        for c in 0..GRID {
            let base = idx(r + 1, c + 1, 0);
            // Wrap the extra angle bin back onto bin 0.
            hist[base] += hist[base + ANGLE_BINS];
            for o in 0..ANGLE_BINS {
                out[(r * GRID + c) * ANGLE_BINS + o] = hist[base + o];
            }
        }
    }
    out
}

/// Scales `v` to unit norm with every element capped at `clamp`.
///
/// The result is the fixed point of normalize, clamp, renormalize: the
/// largest elements are pinned at `clamp` and the rest share the remaining
/// norm in proportion. Returns `None` when fewer than `1 / clamp^2`
/// elements are non-zero, since no such vector exists.
pub fn normalize_clamped(v: &[f64], clamp: f64) -> Option<Vec<f32>> {
    let mut order: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0).collect();
    if (order.len() as f64) * clamp * clamp < 1.0 {
        return None;
    }
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut rest: f64 = order.iter().map(|&i| v[i] * v[i]).sum();
    let cap2 = clamp * clamp;
    let mut scale = 0.0;
    for (pinned, &i) in order.iter().enumerate() {
        let budget = 1.0 - pinned as f64 * cap2;
        if budget <= 0.0 || rest <= 0.0 {
            return None;
        }
        scale = (budget / rest).sqrt();
        if scale * v[i] <= clamp {
            break;
        }
        rest -= v[i] * v[i];
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (scale * x.max(0.0)).min(clamp)).collect();
    // Polish rounding so the norm is one to double precision.
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    let unclamped: f64 = out.iter().filter(|&&x| x < clamp).map(|x| x * x).sum();
    let pinned = norm * norm - unclamped;
    if unclamped > 0.0 {
        let f = ((1.0 - pinned) / unclamped).sqrt();
        for x in out.iter_mut().filter(|x| **x < clamp) {
            *x *= f;
        }
    }
    Some(out.into_iter().map(|x| x as f32).collect())
}

/// Normalized descriptor for an oriented keypoint, or `None` when its
/// gradient histogram is too sparse.
pub fn compute_descriptor(kp: &Keypoint, angle: f64, ss: &ScaleSpace, config: &SiftConfig) -> Option<Vec<f32>> {
    let img = &ss.octaves[kp.octave].gaussians[kp.layer];
    let factor = (1usize << kp.octave) as f64;
    let raw = raw_descriptor(img, kp.x / factor, kp.y / factor, kp.octave_scale, angle);
    normalize_clamped(&raw, config.descriptor_clamp)
}
