//! Dense helpers for the small (d <= 16) symmetric matrices used by the
//! mixture code. Matrices are row-major `d * d` slices.

use nalgebra::{DMatrix, SymmetricEigen};

/// Lower-triangular Cholesky factor, or `None` if `a` is not positive definite.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// `log |A|` from its Cholesky factor.
pub fn log_det_from_cholesky(l: &[f64], d: usize) -> f64 {
    (0..d).map(|i| l[i * d + i].ln()).sum::<f64>() * 2.0
}

/// Solves `L y = b` in place.
pub fn forward_substitute(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * d + k] * b[k];
        }
        b[i] = sum / l[i * d + i];
    }
}

/// Solves `L^T x = y` in place.
pub fn backward_substitute_transposed(l: &[f64], d: usize, y: &mut [f64]) {
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in i + 1..d {
            sum -= l[k * d + i] * y[k];
        }
        y[i] = sum / l[i * d + i];
    }
}

/// `diff^T A^{-1} diff` given the Cholesky factor of `A`.
pub fn mahalanobis_sq(l: &[f64], d: usize, diff: &[f64]) -> f64 {
    // Stack buffer covers every dimension this crate uses.
    let mut buf = [0.0f64; 16];
    let y = &mut buf[..d];
    y.copy_from_slice(diff);
    forward_substitute(l, d, y);
    y.iter().map(|v| v * v).sum()
}

/// Full inverse of `A` from its Cholesky factor.
pub fn inverse_from_cholesky(l: &[f64], d: usize) -> Vec<f64> {
    let mut inv = vec![0.0; d * d];
    let mut col = vec![0.0; d];
    for j in 0..d {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        forward_substitute(l, d, &mut col);
        backward_substitute_transposed(l, d, &mut col);
        for i in 0..d {
            inv[i * d + j] = col[i];
        }
    }
    inv
}

/// Replaces every eigenvalue below `floor` by `floor`.
///
/// This is the closest matrix (in the Gaussian likelihood sense) to `a`
/// whose spectrum is bounded below by `floor`.
pub fn clip_eigenvalues(a: &[f64], d: usize, floor: f64) -> Vec<f64> {
    let m = DMatrix::from_row_slice(d, d, a);
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let clipped = eig.eigenvalues.map(|v| if v < floor { floor } else { v });
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            // Symmetrize exactly so downstream checks see a symmetric matrix.
            out[i * d + j] = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
        }
    }
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &[f64], d: usize) -> f64 {
    let m = DMatrix::from_row_slice(d, d, a);
    SymmetricEigen::new((&m + m.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn mat_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

pub fn trace(a: &[f64], d: usize) -> f64 {
    (0..d).map(|i| a[i * d + i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let mut lt = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                lt[i * 3 + j] = l[j * 3 + i];
            }
        }
        let back = mat_mul(&l, &lt, 3);
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        assert!(cholesky(&[0.0], 1).is_none());
    }

    #[test]
    fn inverse_is_inverse() {
        let a = [2.0, 0.5, 0.5, 1.0];
        let l = cholesky(&a, 2).unwrap();
        let inv = inverse_from_cholesky(&l, 2);
        let id = mat_mul(&a, &inv, 2);
        assert!((id[0] - 1.0).abs() < 1e-12 && id[1].abs() < 1e-12);
        assert!(id[2].abs() < 1e-12 && (id[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clipping_raises_small_eigenvalues_only() {
        let a = [0.0; 9];
        let c = clip_eigenvalues(&a, 3, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((c[i * 3 + j] - want).abs() < 1e-12);
            }
        }
        let big = [10.0, 1.0, 1.0, 10.0];
        let c = clip_eigenvalues(&big, 2, 1.0);
        for (x, y) in c.iter().zip(big.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(min_eigenvalue(&clip_eigenvalues(&[1.0, 0.99, 0.99, 1.0], 2, 0.5), 2) >= 0.5 - 1e-12);
    }
}
