//! Kullback-Leibler divergence between Gaussians and Gaussian mixtures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gmm::{Gaussian, Gmm};
use crate::linalg;

/// Closed-form `KL(p || q)` in nats.
pub fn gaussian_kl(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::dims(d, q.dim()));
    }
    let lq = q.cholesky();
    let lp = p.cholesky();

    // tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    let mut trace = 0.0;
    let mut col = vec![0.0; d];
    for j in 0..d {
        for i in 0..d {
            col[i] = lp[i * d + j];
        }
        linalg::forward_substitute(lq, d, &mut col);
        trace += col.iter().map(|v| v * v).sum::<f64>();
    }
    let diff: Vec<f64> = p.mean().iter().zip(q.mean()).map(|(a, b)| a - b).collect();
    let maha = linalg::mahalanobis_sq(lq, d, &diff);
    let kl = 0.5 * (q.log_det() - p.log_det() + trace - d as f64 + maha);
    Ok(kl.max(0.0))
}

/// Matching-based approximation of `KL(p || q)` for mixtures: every
/// component of `p` is charged against its cheapest component of `q`,
/// including the log ratio of the mixture weights.
pub fn gmm_kl_approx(p: &Gmm, q: &Gmm) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::dims(p.dim(), q.dim()));
    }
    let mut total = 0.0;
    for pc in p.components() {
        let mut best = f64::INFINITY;
        for qc in q.components() {
            let cost = gaussian_kl(&pc.gaussian, &qc.gaussian)? + (pc.weight / qc.weight).ln();
            best = best.min(cost);
        }
        total += pc.weight * best;
    }
    Ok(total.max(0.0))
}

/// Monte-Carlo estimate of `KL(p || q)` from `samples` draws of `p`.
pub fn kl_monte_carlo(p: &Gmm, q: &Gmm, samples: usize, seed: u64) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::dims(p.dim(), q.dim()));
    }
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..samples {
        let x = p.sample(&mut rng);
        sum += p.log_pdf_unchecked(&x) - q.log_pdf_unchecked(&x);
    }
    Ok(sum / samples as f64)
}

/// Symmetrized color dissimilarity between two ear models; lower is closer.
pub fn color_similarity(reference: &Gmm, probe: &Gmm) -> Result<f64> {
    let a = gmm_kl_approx(reference, probe)?;
    let b = gmm_kl_approx(probe, reference)?;
    Ok(0.5 * (a + b))
}

/// Symmetrized Gaussian divergence used as a correspondence cost.
pub fn symmetric_gaussian_kl(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    Ok(0.5 * (gaussian_kl(a, b)? + gaussian_kl(b, a)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g1(mean: f64, var: f64) -> Gaussian {
        Gaussian::new(vec![mean], vec![var]).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(gaussian_kl(&g1(0.0, 1.0), &g1(0.0, 1.0)).unwrap(), 0.0);
        assert_relative_eq!(gaussian_kl(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap(), 0.5, epsilon = 1e-12);
        let want = 0.5 * (4f64.ln() + 0.25 - 1.0);
        assert_relative_eq!(gaussian_kl(&g1(0.0, 1.0), &g1(0.0, 4.0)).unwrap(), want, epsilon = 1e-12);
        assert_relative_eq!(want, 0.31815, epsilon = 1e-5);
    }

    #[test]
    fn multivariate_matches_explicit_inverse() {
        let p = Gaussian::new(vec![1.0, -2.0, 0.5], vec![2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]).unwrap();
        let q = Gaussian::new(vec![0.0, 0.0, 1.0], vec![3.0, -0.5, 0.0, -0.5, 2.0, 0.4, 0.0, 0.4, 4.0]).unwrap();
        let lq = linalg::cholesky(q.covariance(), 3).unwrap();
        let inv = linalg::inverse_from_cholesky(&lq, 3);
        let tr = linalg::trace(&linalg::mat_mul(&inv, p.covariance(), 3), 3);
        let diff = [1.0, -2.0, -0.5];
        let mut maha = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                maha += diff[i] * inv[i * 3 + j] * diff[j];
            }
        }
        let want = 0.5 * (q.log_det() - p.log_det() + tr - 3.0 + maha);
        assert_relative_eq!(gaussian_kl(&p, &q).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = g1(0.0, 1.0);
        let b = Gaussian::isotropic(vec![0.0, 0.0], 1.0).unwrap();
        assert!(gaussian_kl(&a, &b).is_err());
        assert!(gmm_kl_approx(&Gmm::single(a), &Gmm::single(b)).is_err());
    }

    #[test]
    fn mixture_reductions() {
        let p = g1(0.0, 1.0);
        let q = g1(1.5, 2.0);
        assert_eq!(
            gmm_kl_approx(&Gmm::single(p.clone()), &Gmm::single(q.clone())).unwrap(),
            gaussian_kl(&p, &q).unwrap()
        );
        let m = Gmm::from_unnormalized(vec![(0.3, p), (0.7, q)]).unwrap();
        assert_eq!(gmm_kl_approx(&m, &m).unwrap(), 0.0);
        assert_eq!(color_similarity(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn monte_carlo_sanity() {
        let p = Gmm::single(g1(0.0, 1.0));
        let q = Gmm::single(g1(1.0, 1.0));
        assert!(kl_monte_carlo(&p, &p, 100_000, 1).unwrap().abs() < 0.01);
        assert!((kl_monte_carlo(&p, &q, 100_000, 2).unwrap() - 0.5).abs() < 0.02);
        let wide = Gmm::single(g1(0.0, 4.0));
        let fwd = kl_monte_carlo(&p, &wide, 100_000, 3).unwrap();
        let back = kl_monte_carlo(&wide, &p, 100_000, 3).unwrap();
        assert!((fwd - back).abs() > 0.1);
        assert!(kl_monte_carlo(&p, &q, 0, 1).is_err());
    }

    #[test]
    fn similarity_is_symmetric() {
        let a = Gmm::from_unnormalized(vec![(0.4, g1(0.0, 1.0)), (0.6, g1(5.0, 2.0))]).unwrap();
        let b = Gmm::from_unnormalized(vec![(0.5, g1(1.0, 1.5)), (0.5, g1(4.0, 1.0))]).unwrap();
        assert_eq!(color_similarity(&a, &b).unwrap(), color_similarity(&b, &a).unwrap());
    }
}
