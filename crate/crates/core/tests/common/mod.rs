#![allow(dead_code)]

use earlock::imaging::GrayImage;
use earlock::sift::SiftFeature;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded blob texture; `zoom` renders the same pattern magnified about the
/// center, `angle` rotated about the center.
pub fn blob_texture(n: usize, seed: u64, angle: f64, zoom: f64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = n * n / 50;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random::<f64>() * n as f64,
                rng.random::<f64>() * n as f64,
                1.5 + rng.random::<f64>() * 3.5,
                if rng.random::<bool>() { 1.0 } else { -1.0 } * (0.15 + 0.25 * rng.random::<f64>()),
            )
        })
        .collect();
    let c = (n as f64 - 1.0) / 2.0;
    let (cos, sin) = (angle.cos(), angle.sin());
    GrayImage::from_fn(n, n, |x, y| {
        // Inverse map output pixel to pattern coordinates.
        let (dx, dy) = ((x as f64 - c) / zoom, (y as f64 - c) / zoom);
        let (px, py) = (c + dx * cos + dy * sin, c - dx * sin + dy * cos);
        let mut v = 0.5;
        for &(bx, by, s, a) in &blobs {
            let d2 = (px - bx).powi(2) + (py - by).powi(2);
            if d2 < 25.0 * s * s {
                v += a * (-d2 / (2.0 * s * s)).exp();
            }
        }
        v as f32
    })
    .unwrap()
}

/// Fraction of `original` keypoints (inside `valid_radius` of the center)
/// re-detected in `transformed` within `px` pixels and one scale layer,
/// after mapping through rotation `angle` and magnification `zoom`.
#[allow(clippy::too_many_arguments)]
pub fn repeatability(
    original: &[SiftFeature],
    transformed: &[SiftFeature],
    n: usize,
    angle: f64,
    zoom: f64,
    valid_radius: f64,
    px: f64,
    scales_per_octave: f64,
) -> (f64, usize) {
    let c = (n as f64 - 1.0) / 2.0;
    let (cos, sin) = (angle.cos(), angle.sin());
    let mut seen: Vec<(f32, f32, f32)> = Vec::new();
    let mut total = 0;
    let mut hit = 0;
    for f in original {
        let key = (f.x, f.y, f.scale);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let (dx, dy) = (f.x as f64 - c, f.y as f64 - c);
        let (mx, my) = (c + zoom * (dx * cos - dy * sin), c + zoom * (dx * sin + dy * cos));
        if ((mx - c).powi(2) + (my - c).powi(2)).sqrt() > valid_radius {
            continue;
        }
        total += 1;
        let want_scale = f.scale as f64 * zoom;
        if transformed.iter().any(|g| {
            let d = ((g.x as f64 - mx).powi(2) + (g.y as f64 - my).powi(2)).sqrt();
            let layers = (g.scale as f64 / want_scale).log2().abs() * scales_per_octave;
            d <= px && layers <= 1.0
        }) {
            hit += 1;
        }
    }
    (hit as f64 / total.max(1) as f64, total)
}
