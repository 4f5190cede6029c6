use rayon::prelude::*;

use super::scale_space::{Plane, ScaleSpace};
use super::SiftConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Candidate {
    pub octave: usize,
    /// DoG layer index, in `1..=scales_per_octave`.
    pub layer: usize,
    pub x: usize,
    pub y: usize,
}

/// Keypoint after sub-pixel refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub octave: usize,
    pub layer: usize,
    /// Integer location in the octave grid after refinement.
    pub xi: usize,
    pub yi: usize,
    /// Refined location in the input image frame.
    pub x: f64,
    pub y: f64,
    /// Fractional layer offset in `(-0.5, 0.5]`.
    pub layer_offset: f64,
    /// Blur in input-image pixels.
    pub scale: f64,
    /// Blur in the octave's own pixels.
    pub octave_scale: f64,
    pub response: f64,
}

fn is_extremum(below: &Plane, here: &Plane, above: &Plane, x: usize, y: usize) -> bool {
    let v = here.at(x, y);
    let greater = v > 0.0;
    for plane in [below, here, above] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(plane, here) && xx == x && yy == y {
                    continue;
                }
                let n = plane.at(xx, yy);
                if (greater && n >= v) || (!greater && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

/// Strict 26-neighbor extrema of the DoG stack above the contrast
/// pre-threshold, in canonical `(octave, layer, y, x)` order.
pub fn detect_extrema(ss: &ScaleSpace, config: &SiftConfig) -> Vec<Candidate> {
    let s = ss.scales_per_octave;
    let pre = (config.contrast_threshold * config.prethreshold_factor) as f32;
    let border = config.image_border;
    let jobs: Vec<(usize, usize)> = (0..ss.octaves.len())
        .flat_map(|o| (1..=s).map(move |l| (o, l)))
        .collect();
    let found: Vec<Vec<Candidate>> = jobs
        .par_iter()
        .map(|&(o, l)| {
            let oct = &ss.octaves[o];
            let (w, h) = (oct.width(), oct.height());
            let mut out = Vec::new();
            if w <= 2 * border || h <= 2 * border {
                return out;
            }
            let (below, here, above) = (&oct.dogs[l - 1], &oct.dogs[l], &oct.dogs[l + 1]);
            for y in border..h - border {
                for x in border..w - border {
                    if here.at(x, y).abs() > pre && is_extremum(below, here, above, x, y) {
                        out.push(Candidate { octave: o, layer: l, x, y });
                    }
                }
            }
            out
        })
        .collect();
    found.into_iter().flatten().collect()
}

fn gradient_and_hessian(ss: &ScaleSpace, o: usize, l: usize, x: usize, y: usize) -> ([f64; 3], [f64; 9]) {
    let d = &ss.octaves[o].dogs;
    let v = |p: &Plane, xx: usize, yy: usize| p.at(xx, yy) as f64;
    let (prev, cur, next) = (&d[l - 1], &d[l], &d[l + 1]);
    let c = v(cur, x, y);
    let dx = 0.5 * (v(cur, x + 1, y) - v(cur, x - 1, y));
    let dy = 0.5 * (v(cur, x, y + 1) - v(cur, x, y - 1));
    let ds = 0.5 * (v(next, x, y) - v(prev, x, y));
    let dxx = v(cur, x + 1, y) + v(cur, x - 1, y) - 2.0 * c;
    let dyy = v(cur, x, y + 1) + v(cur, x, y - 1) - 2.0 * c;
    let dss = v(next, x, y) + v(prev, x, y) - 2.0 * c;
    let dxy = 0.25 * (v(cur, x + 1, y + 1) - v(cur, x - 1, y + 1) - v(cur, x + 1, y - 1) + v(cur, x - 1, y - 1));
    let dxs = 0.25 * (v(next, x + 1, y) - v(next, x - 1, y) - v(prev, x + 1, y) + v(prev, x - 1, y));
    let dys = 0.25 * (v(next, x, y + 1) - v(next, x, y - 1) - v(prev, x, y + 1) + v(prev, x, y - 1));
    ([dx, dy, ds], [dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss])
}

/// Solves the 3x3 system `h x = b` by Cramer's rule.
fn solve3(h: &[f64; 9], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6])
        + h[2] * (h[3] * h[7] - h[4] * h[6]);
    if det.abs() < 1e-12 {
        return None;
    }
    let col = |i: usize| {
        let mut m = *h;
        for r in 0..3 {
            m[r * 3 + i] = b[r];
        }
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
    };
    Some([col(0) / det, col(1) / det, col(2) / det])
}

/// Quadratic refinement with contrast and edge-response rejection.
pub fn localize(c: Candidate, ss: &ScaleSpace, config: &SiftConfig) -> Option<Keypoint> {
    let s = ss.scales_per_octave;
    let oct = &ss.octaves[c.octave];
    let (w, h) = (oct.width(), oct.height());
    let border = config.image_border;
    let (mut x, mut y, mut l) = (c.x, c.y, c.layer);
    let mut converged = None;
    for _ in 0..config.max_interpolation_steps {
        let (g, hess) = gradient_and_hessian(ss, c.octave, l, x, y);
        let offset = solve3(&hess, [-g[0], -g[1], -g[2]])?;
        if offset.iter().all(|v| v.abs() <= 0.5) {
            converged = Some((offset, g));
            break;
        }
        if offset.iter().any(|v| v.abs() > (i32::MAX / 3) as f64) {
            return None;
        }
        let nx = x as i64 + offset[0].round() as i64;
        let ny = y as i64 + offset[1].round() as i64;
        let nl = l as i64 + offset[2].round() as i64;
        if nl < 1 || nl > s as i64 || nx < border as i64 || ny < border as i64 || nx >= (w - border) as i64 || ny >= (h - border) as i64 {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        l = nl as usize;
    }
    let (offset, g) = converged?;
    let value = oct.dogs[l].at(x, y) as f64;
    let response = value + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
    if response.abs() < config.contrast_threshold {
        return None;
    }
    let (_, hess) = gradient_and_hessian(ss, c.octave, l, x, y);
    let (dxx, dxy, dyy) = (hess[0], hess[1], hess[4]);
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = config.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    let factor = (1usize << c.octave) as f64;
    let octave_scale = ss.layer_sigma(l as f64 + offset[2]);
    Some(Keypoint {
        octave: c.octave,
        layer: l,
        xi: x,
        yi: y,
        x: (x as f64 + offset[0]) * factor,
        y: (y as f64 + offset[1]) * factor,
        layer_offset: offset[2],
        scale: octave_scale * factor,
        octave_scale,
        response,
    })
}

pub fn localize_and_filter(candidates: &[Candidate], ss: &ScaleSpace, config: &SiftConfig) -> Vec<Keypoint> {
    let mut kps: Vec<Keypoint> = candidates
        .par_iter()
        .filter_map(|c| localize(*c, ss, config))
        .collect();
    // Refinement can move two candidates onto the same sample.
    kps.sort_by_key(|k| (k.octave, k.layer, k.yi, k.xi));
    kps.dedup_by(|a, b| a.octave == b.octave && a.layer == b.layer && a.xi == b.xi && a.yi == b.yi);
    kps
}

#[cfg(test)]
mod tests {
    use super::super::scale_space::build_scale_space;
    use super::*;
    use crate::imaging::GrayImage;

    fn blob(n: usize, cx: f64, cy: f64, sigma: f64) -> GrayImage {
        GrayImage::from_fn(n, n, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (0.1 + 0.8 * (-d2 / (2.0 * sigma * sigma)).exp()) as f32
        })
        .unwrap()
    }

    #[test]
    fn flat_image_has_no_candidates() {
        let ss = build_scale_space(&GrayImage::filled(64, 64, 0.5).unwrap(), &SiftConfig::default()).unwrap();
        assert!(detect_extrema(&ss, &SiftConfig::default()).is_empty());
    }

    #[test]
    fn blob_is_detected_and_localized() {
        let cfg = SiftConfig::default();
        let (cx, cy) = (32.3, 30.6);
        let ss = build_scale_space(&blob(64, cx, cy, 3.0), &cfg).unwrap();
        let cands = detect_extrema(&ss, &cfg);
        let near = |x: f64, y: f64| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        assert!(cands.iter().any(|c| {
            let f = (1 << c.octave) as f64;
            near(c.x as f64 * f, c.y as f64 * f) <= 2.0 * f
        }));
        let kps = localize_and_filter(&cands, &ss, &cfg);
        let best = kps
            .iter()
            .filter(|k| k.octave == 0)
            .map(|k| near(k.x, k.y))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.5, "closest keypoint {best} px from center");
    }

    #[test]
    fn step_edge_is_rejected() {
        let cfg = SiftConfig::default();
        let img = GrayImage::from_fn(64, 64, |x, _| if x < 32 { 0.1 } else { 0.9 }).unwrap();
        let ss = build_scale_space(&img, &cfg).unwrap();
        let cands = detect_extrema(&ss, &cfg);
        let kps = localize_and_filter(&cands, &ss, &cfg);
        assert!(kps.iter().all(|k| (k.x - 32.0).abs() > 8.0 * (1 << k.octave) as f64), "{kps:?}");
        // Hand-placed candidates on the edge must fail the curvature test.
        for y in 10..54 {
            for x in [31, 32] {
                for layer in 1..=3 {
                    assert!(localize(Candidate { octave: 0, layer, x, y }, &ss, &cfg).is_none());
                }
            }
        }
    }

    #[test]
    fn faint_ripple_is_rejected() {
        let cfg = SiftConfig::default();
        let img = GrayImage::from_fn(64, 64, |x, y| {
            0.5 + 0.005 * ((x as f32 * 0.7).sin() * (y as f32 * 0.7).cos())
        })
        .unwrap();
        let ss = build_scale_space(&img, &cfg).unwrap();
        let all: Vec<Candidate> = (5..59)
            .flat_map(|y| (5..59).map(move |x| Candidate { octave: 0, layer: 1, x, y }))
            .collect();
        assert!(localize_and_filter(&all, &ss, &cfg).is_empty());
    }
}
