//! Gaussian mixture models of pixel colors: vector-quantization
//! initialization, EM fitting and MDL order selection.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::Rgb;
use crate::linalg;

pub const MAX_COMPONENTS: usize = 16;
pub const MAX_DIM: usize = 16;

/// Row-major point cloud of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    values: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        if values.len() % dim != 0 {
            return Err(Error::dims(format!("multiple of {dim}"), values.len()));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyData)?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::dims(dim, r.len()));
            }
            values.extend_from_slice(r);
        }
        Self::new(dim, values)
    }

    pub fn from_rgb(pixels: &[Rgb]) -> Self {
        let values = pixels.iter().flat_map(|p| p.map(f64::from)).collect();
        Self { dim: 3, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Every `stride`-th point.
    pub fn strided(&self, stride: usize) -> Points {
        if stride <= 1 {
            return self.clone();
        }
        let values = self.rows().step_by(stride).flatten().copied().collect();
        Points {
            dim: self.dim,
            values,
        }
    }

    fn distinct_at_least(&self, k: usize) -> usize {
        let mut seen = HashSet::new();
        for r in self.rows() {
            seen.insert(r.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            if seen.len() >= k {
                break;
            }
        }
        seen.len()
    }
}

/// Multivariate normal with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    covariance: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.covariance == other.covariance
    }
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidConfig(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        if covariance.len() != d * d {
            return Err(Error::dims(d * d, covariance.len()));
        }
        if mean.iter().chain(&covariance).any(|v| !v.is_finite()) {
            return Err(Error::SingularCovariance);
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (covariance[i * d + j], covariance[j * d + i]);
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidConfig("covariance is not symmetric".into()));
                }
            }
        }
        let chol = linalg::cholesky(&covariance, d).ok_or(Error::SingularCovariance)?;
        let log_det = linalg::log_det_from_cholesky(&chol, d);
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            covariance,
            chol,
            log_norm,
        })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = variance;
        }
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub(crate) fn cholesky(&self) -> &[f64] {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        linalg::log_det_from_cholesky(&self.chol, self.dim())
    }

    /// Log density without a dimension check.
    pub(crate) fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut diff = [0.0f64; MAX_DIM];
        for i in 0..d {
            diff[i] = x[i] - self.mean[i];
        }
        self.log_norm - 0.5 * linalg::mahalanobis_sq(&self.chol, d, &diff[..d])
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dims(self.dim(), x.len()));
        }
        Ok(self.log_pdf_unchecked(x))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|k| self.chol[i * d + k] * z[k]).sum::<f64>())
            .collect()
    }
}

/// Density of `g` at `x`.
pub fn gaussian_pdf(g: &Gaussian, x: &[f64]) -> Result<f64> {
    g.log_pdf(x).map(f64::exp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub gaussian: Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    components: Vec<Component>,
}

impl Gmm {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let n = components.len();
        if n == 0 || n > MAX_COMPONENTS {
            return Err(Error::InvalidConfig(format!(
                "component count {n} outside 1..={MAX_COMPONENTS}"
            )));
        }
        let d = components[0].gaussian.dim();
        if let Some(c) = components.iter().find(|c| c.gaussian.dim() != d) {
            return Err(Error::dims(d, c.gaussian.dim()));
        }
        if components
            .iter()
            .any(|c| !(c.weight > 0.0 && c.weight <= 1.0))
        {
            return Err(Error::InvalidConfig("mixture weight outside (0,1]".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    /// Builds a mixture from positive weights that need not sum to one.
    pub fn from_unnormalized(parts: Vec<(f64, Gaussian)>) -> Result<Self> {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig("mixture weights sum to zero".into()));
        }
        Self::new(
            parts
                .into_iter()
                .map(|(w, gaussian)| Component {
                    weight: w / total,
                    gaussian,
                })
                .collect(),
        )
    }

    pub fn single(g: Gaussian) -> Self {
        Self {
            components: vec![Component {
                weight: 1.0,
                gaussian: g,
            }],
        }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].gaussian.dim()
    }

    pub(crate) fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let mut terms = [0.0f64; MAX_COMPONENTS];
        for (t, c) in terms.iter_mut().zip(&self.components) {
            *t = c.weight.ln() + c.gaussian.log_pdf_unchecked(x);
        }
        log_sum_exp(&terms[..self.components.len()])
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::dims(self.dim(), x.len()));
        }
        Ok(self.log_pdf_unchecked(x))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c.gaussian.sample(rng);
            }
        }
        self.components.last().unwrap().gaussian.sample(rng)
    }

    /// Number of free parameters: weights, means and full covariances.
    pub fn free_parameters(k: usize, d: usize) -> usize {
        (k - 1) + k * d + k * d * (d + 1) / 2
    }

    /// Text form: `GMM v1 d={d} k={k}` then one line per component with
    /// the weight, the mean and the row-major covariance.
    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut out = format!("GMM v1 d={d} k={}\n", self.len());
        for c in &self.components {
            let mut line = format!("{:.16e}", c.weight);
            for v in c.gaussian.mean().iter().chain(c.gaussian.covariance()) {
                write!(line, " {v:.16e}").unwrap();
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::parse("GMM", "missing header"))?;
        let (d, k) = parse_gmm_header(header)?;
        let mut components = Vec::with_capacity(k);
        for i in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse("GMM", format!("missing component {i}")))?;
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::parse("GMM", e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 1 + d + d * d {
                return Err(Error::parse(
                    "GMM",
                    format!("component {i} has {} values, want {}", vals.len(), 1 + d + d * d),
                ));
            }
            components.push(Component {
                weight: vals[0],
                gaussian: Gaussian::new(vals[1..1 + d].to_vec(), vals[1 + d..].to_vec())?,
            });
        }
        Self::new(components)
    }
}

pub(crate) fn parse_gmm_header(header: &str) -> Result<(usize, usize)> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some("GMM") || parts.next() != Some("v1") {
        return Err(Error::parse("GMM", format!("bad header {header:?}")));
    }
    let mut field = |key: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|t| t.strip_prefix(key))
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse("GMM", format!("bad header {header:?}")))
    };
    let d = field("d=")?;
    let k = field("k=")?;
    Ok((d, k))
}

/// Mixture density at `x`.
pub fn gmm_pdf(model: &Gmm, x: &[f64]) -> Result<f64> {
    model.log_pdf(x).map(f64::exp)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the mean per-point log-likelihood.
    pub tolerance: f64,
    /// Lower bound on every covariance eigenvalue.
    pub covariance_floor: f64,
    pub seed: u64,
    /// Fit on every `stride`-th point only.
    pub stride: usize,
    /// Independent VQ initializations; the fit with the highest likelihood
    /// is kept.
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            covariance_floor: 1.0,
            seed: 0,
            stride: 1,
            restarts: 1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be > 0".into()));
        }
        if !(self.covariance_floor > 0.0) {
            return Err(Error::InvalidConfig("covariance_floor must be > 0".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: Gmm,
    /// Total log-likelihood of the fitted points under `model`.
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Mean per-point log-likelihood after initialization and after each M-step.
    pub history: Vec<f64>,
    /// Iteration indices (into `history`) at which a collapsed component was re-seeded.
    pub reseeds: Vec<usize>,
    pub points_used: usize,
}

impl FitResult {
    /// True when no history step decreases by more than `slack`, ignoring re-seed steps.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.history
            .windows(2)
            .enumerate()
            .all(|(i, w)| self.reseeds.contains(&(i + 1)) || w[1] >= w[0] - slack)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means codebook (k-means++ seeding, Lloyd iterations) turned into a
/// mixture: cluster fractions as weights, per-cluster covariance floored.
pub fn vq_initialize(points: &Points, k: usize, seed: u64, floor: f64) -> Result<Gmm> {
    if k == 0 || k > MAX_COMPONENTS {
        return Err(Error::InvalidConfig(format!("k={k} outside 1..={MAX_COMPONENTS}")));
    }
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    let distinct = points.distinct_at_least(k);
    if distinct < k {
        return Err(Error::TooFewDistinct {
            k,
            required: k,
            found: distinct,
        });
    }
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<Vec<f64>> = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = points.rows().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, w) in d2.iter().enumerate() {
            if *w > 0.0 {
                pick = Some(i);
                if target < *w {
                    break;
                }
                target -= w;
            }
        }
        let c = points.row(pick.expect("distinct points remain")).to_vec();
        for (i, p) in points.rows().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &c));
        }
        centers.push(c);
    }

    let d = points.dim();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.rows().enumerate() {
            let (j, _) = nearest(p, &centers);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Empty cell: move it to the point worst served by its center.
                let far = points
                    .rows()
                    .zip(&labels)
                    .enumerate()
                    .map(|(i, (p, &l))| (i, squared_distance(p, &centers[l])))
                    .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                    .0;
                centers[j] = points.row(far).to_vec();
                labels[far] = j;
                changed = true;
            } else {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }

    let mut parts = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<&[f64]> = points
            .rows()
            .zip(&labels)
            .filter(|(_, &l)| l == j)
            .map(|(p, _)| p)
            .collect();
        let count = members.len().max(1) as f64;
        let mean: Vec<f64> = (0..d)
            .map(|a| members.iter().map(|p| p[a]).sum::<f64>() / count)
            .collect();
        let mut cov = vec![0.0; d * d];
        for p in &members {
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= count);
        let cov = linalg::clip_eigenvalues(&cov, d, floor);
        parts.push((members.len().max(1) as f64, Gaussian::new(mean, cov)?));
    }
    Gmm::from_unnormalized(parts)
}

const E_STEP_CHUNK: usize = 4096;

/// Responsibilities (row-major n x k) and per-point log-likelihoods.
fn e_step(model: &Gmm, points: &Points) -> (Vec<f64>, Vec<f64>) {
    let k = model.len();
    let log_weights: Vec<f64> = model.components.iter().map(|c| c.weight.ln()).collect();
    let dim = points.dim();
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = points
        .values
        .par_chunks(E_STEP_CHUNK * dim)
        .map(|chunk| {
            let m = chunk.len() / dim;
            let mut resp = vec![0.0; m * k];
            let mut ll = vec![0.0; m];
            for (i, x) in chunk.chunks_exact(dim).enumerate() {
                let row = &mut resp[i * k..(i + 1) * k];
                for (j, c) in model.components.iter().enumerate() {
                    row[j] = log_weights[j] + c.gaussian.log_pdf_unchecked(x);
                }
                let lse = log_sum_exp(row);
                for r in row.iter_mut() {
                    *r = (*r - lse).exp();
                }
                ll[i] = lse;
            }
            (resp, ll)
        })
        .collect();
    let mut resp = Vec::with_capacity(points.len() * k);
    let mut ll = Vec::with_capacity(points.len());
    for (r, l) in chunks {
        resp.extend(r);
        ll.extend(l);
    }
    (resp, ll)
}

/// Weighted covariance of the whole point set, used to re-seed components.
fn global_covariance(points: &Points, floor: f64) -> Vec<f64> {
    let d = points.dim();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points.rows() {
        for a in 0..d {
            mean[a] += p[a] / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for p in points.rows() {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (p[a] - mean[a]) * (p[b] - mean[b]) / n;
            }
        }
    }
    linalg::clip_eigenvalues(&cov, d, floor)
}

fn m_step(
    points: &Points,
    resp: &[f64],
    point_ll: &[f64],
    k: usize,
    floor: f64,
) -> Result<(Gmm, bool)> {
    let d = points.dim();
    let n = points.len();
    let mut parts = Vec::with_capacity(k);
    let mut reseeded = false;
    for j in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
        if nk < 1.0 {
            // Collapsed: restart at the point the model explains worst.
            reseeded = true;
            let worst = point_ll
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a })
                .0;
            let g = Gaussian::new(points.row(worst).to_vec(), global_covariance(points, floor))?;
            parts.push((1.0 / n as f64, g));
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, p) in points.rows().enumerate() {
            let r = resp[i * k + j];
            for a in 0..d {
                mean[a] += r * p[a];
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = vec![0.0; d * d];
        for (i, p) in points.rows().enumerate() {
            let r = resp[i * k + j];
            if r == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = r * (p[a] - mean[a]);
                for b in a..d {
                    cov[a * d + b] += da * (p[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / nk;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        // Eigenvalue clipping is the exact constrained maximizer, which keeps
        // the likelihood sequence monotone.
        let cov = linalg::clip_eigenvalues(&cov, d, floor);
        parts.push((nk / n as f64, Gaussian::new(mean, cov)?));
    }
    Ok((Gmm::from_unnormalized(parts)?, reseeded))
}

/// Runs EM from `init` until the mean log-likelihood changes by less than
/// `config.tolerance` or `config.max_iterations` M-steps have run.
pub fn em_refine(init: Gmm, points: &Points, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    if init.dim() != points.dim() {
        return Err(Error::dims(init.dim(), points.dim()));
    }
    let n = points.len() as f64;
    let k = init.len();
    let mut model = init;
    let (mut resp, mut point_ll) = e_step(&model, points);
    let mut history = vec![point_ll.iter().sum::<f64>() / n];
    let mut reseeds = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let (next, reseeded) = m_step(points, &resp, &point_ll, k, config.covariance_floor)?;
        model = next;
        iterations += 1;
        let (r, l) = e_step(&model, points);
        resp = r;
        point_ll = l;
        let mean_ll = point_ll.iter().sum::<f64>() / n;
        history.push(mean_ll);
        if reseeded {
            reseeds.push(history.len() - 1);
            continue;
        }
        let prev = history[history.len() - 2];
        if (mean_ll - prev).abs() < config.tolerance {
            break;
        }
    }
    Ok(FitResult {
        model,
        log_likelihood: point_ll.iter().sum(),
        iterations,
        history,
        reseeds,
        points_used: points.len(),
    })
}

/// VQ initialization followed by EM, best of `config.restarts` runs
/// (ties go to the earliest).
pub fn em_fit(points: &Points, k: usize, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let used = points.strided(config.stride);
    let runs: Vec<Result<FitResult>> = (0..config.restarts as u64)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let init = vq_initialize(&used, k, seed, config.covariance_floor)?;
            em_refine(init, &used, config)
        })
        .collect();
    let mut best: Option<FitResult> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().map_or(true, |b| run.log_likelihood > b.log_likelihood) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone)]
pub struct MdlSelection {
    pub k: usize,
    pub fit: FitResult,
    /// `(k, description length)` for every candidate order.
    pub scores: Vec<(usize, f64)>,
}

impl MdlSelection {
    pub fn model(&self) -> &Gmm {
        &self.fit.model
    }
}

/// Two-part code length: `-log L + P/2 * ln n`.
pub fn mdl_score(log_likelihood: f64, k: usize, d: usize, n: usize) -> f64 {
    -log_likelihood + 0.5 * Gmm::free_parameters(k, d) as f64 * (n as f64).ln()
}

/// Fits every order in `orders` and keeps the one with the shortest
/// description length (ties go to the smaller order).
pub fn mdl_select(points: &Points, orders: RangeInclusive<usize>, config: &FitConfig) -> Result<MdlSelection> {
    let (lo, hi) = (*orders.start(), *orders.end());
    if lo == 0 || lo > hi || hi > MAX_COMPONENTS {
        return Err(Error::InvalidConfig(format!("order range {lo}..={hi}")));
    }
    let fits: Vec<Result<FitResult>> = (lo..=hi)
        .into_par_iter()
        .map(|k| em_fit(points, k, config))
        .collect();
    let mut best: Option<(usize, f64, FitResult)> = None;
    let mut scores = Vec::new();
    for (k, fit) in (lo..=hi).zip(fits) {
        let fit = fit?;
        let score = mdl_score(fit.log_likelihood, k, points.dim(), fit.points_used);
        scores.push((k, score));
        if best.as_ref().map_or(true, |b| score < b.1) {
            best = Some((k, score, fit));
        }
    }
    let (k, _, fit) = best.expect("non-empty order range");
    Ok(MdlSelection { k, fit, scores })
}
