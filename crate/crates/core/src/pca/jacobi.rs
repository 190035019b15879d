//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Dependency-free and deterministic: identical input bytes produce
//! identical eigenpairs, which the model file format relies on.

use alloc::vec::Vec;

#[allow(unused_imports)] // float methods under no_std
use num_traits::Float;

use crate::error::CoreError;
use crate::pca::matrix::Matrix;
use crate::Result;

pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues and eigenvectors of a symmetric matrix.
///
/// Returns `(eigenvalues, vectors)` sorted by descending eigenvalue;
/// column `p` of `vectors` is the unit eigenvector of `eigenvalues[p]`.
/// Each eigenvector is scaled so its largest-magnitude entry (lowest
/// index on ties) is positive.
pub fn sym_eigen(matrix: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = matrix.rows();
    if n != matrix.cols() {
        return Err(CoreError::dims(n, matrix.cols(), "symmetric eigen input"));
    }
    let mut a = matrix.clone();
    let mut v = Matrix::identity(n);
    if n == 0 {
        return Ok((Vec::new(), v));
    }

    let scale: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let tol = JACOBI_TOL * scale;

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += a.get(p, q).abs();
                }
            }
            s
        };
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                let theta = 0.5 * (a.get(q, q) - a.get(p, p)) / apq;
                let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                if theta < 0.0 {
                    t = -t;
                }
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                a.set(p, p, a.get(p, p) - h);
                a.set(q, q, a.get(q, q) + h);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for j in 0..n {
                    if j == p || j == q {
                        continue;
                    }
                    let g = a.get(j, p);
                    let hh = a.get(j, q);
                    a.set(j, p, g - s * (hh + g * tau));
                    a.set(p, j, a.get(j, p));
                    a.set(j, q, hh + s * (g - hh * tau));
                    a.set(q, j, a.get(j, q));
                }
                for j in 0..n {
                    let g = v.get(j, p);
                    let hh = v.get(j, q);
                    v.set(j, p, g - s * (hh + g * tau));
                    v.set(j, q, hh + s * (g - hh * tau));
                }
            }
        }
    }
    if !converged {
        // final check after the last sweep
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q).abs();
            }
        }
        if off > tol {
            return Err(CoreError::NoConvergence(JACOBI_MAX_SWEEPS));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .expect("eigenvalues are finite")
            .then(i.cmp(&j))
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(a.get(src, src));
        let mut col: Vec<f64> = (0..n).map(|i| v.get(i, src)).collect();
        fix_sign(&mut col);
        for (i, &x) in col.iter().enumerate() {
            vectors.set(i, dst, x);
        }
    }
    Ok((eigenvalues, vectors))
}

/// Scale a vector so its largest-magnitude entry is positive; ties go
/// to the lowest index.
fn fix_sign(col: &mut [f64]) {
    let mut best = 0usize;
    for (i, &x) in col.iter().enumerate() {
        if x.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn residual(a: &Matrix, lambda: f64, v: &[f64]) -> f64 {
        let n = a.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut av = 0.0;
            for j in 0..n {
                av += a.get(i, j) * v[j];
            }
            worst = worst.max((av - lambda * v[i]).abs());
        }
        worst
    }

    #[test]
    fn diagonal_matrix_is_ordered() {
        let a = Matrix::from_rows(&[
            alloc::vec![2.0, 0.0, 0.0],
            alloc::vec![0.0, 5.0, 0.0],
            alloc::vec![0.0, 0.0, 3.0],
        ])
        .unwrap();
        let (l, v) = sym_eigen(&a).unwrap();
        assert_eq!(l, alloc::vec![5.0, 3.0, 2.0]);
        assert_eq!(v.col(0), alloc::vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn known_two_by_two() {
        // eigenvalues of [[3,4],[4,9]] are 1 and 11
        let a = Matrix::from_rows(&[alloc::vec![3.0, 4.0], alloc::vec![4.0, 9.0]]).unwrap();
        let (l, v) = sym_eigen(&a).unwrap();
        assert_abs_diff_eq!(l[0], 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1], 1.0, epsilon = 1e-12);
        for p in 0..2 {
            assert!(residual(&a, l[p], &v.col(p)) < 1e-10);
        }
    }

    #[test]
    fn eigenvectors_orthonormal_and_consistent() {
        let a = Matrix::from_rows(&[
            alloc::vec![1.0, 2.0, 3.0],
            alloc::vec![2.0, 3.0, 2.0],
            alloc::vec![3.0, 2.0, 2.0],
        ])
        .unwrap();
        let (l, v) = sym_eigen(&a).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                let dot: f64 = (0..3).map(|i| v.get(i, p) * v.get(i, q)).sum();
                let expect = if p == q { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-12);
            }
            assert!(residual(&a, l[p], &v.col(p)) < 1e-10);
        }
        // trace preserved
        assert_abs_diff_eq!(l.iter().sum::<f64>(), 6.0, epsilon = 1e-10);
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let a = Matrix::from_rows(&[alloc::vec![0.0, 1.0], alloc::vec![1.0, 0.0]]).unwrap();
        let (_, v) = sym_eigen(&a).unwrap();
        // both entries of the top eigenvector have equal magnitude; the
        // first must be positive
        assert!(v.get(0, 0) > 0.0);
    }
}
