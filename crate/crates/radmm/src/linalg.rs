//! Minimal dense linear algebra for small symmetric positive-definite systems.
//!
//! Every linear solve in the library — prox of a quadratic, the closed-form
//! x-update, the centralized optimum — is of the form `A x = rhs` with `A`
//! symmetric positive-definite and tiny (the cost dimension, typically 1-3).
//! A hand-rolled Cholesky factorization covers that without pulling a matrix
//! library into the dependency tree.

use crate::error::{Error, Result};

/// Solve `a x = rhs` for symmetric positive-definite `a` (row-major `n x n`)
/// via Cholesky factorization. Fails with [`Error::Singular`] when `a` is not
/// numerically positive-definite.
pub(crate) fn cholesky_solve(a: &[f64], n: usize, rhs: &[f64], context: &str) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(rhs.len(), n);
    if n == 1 {
        // Scalar fast path: the hot loops of the consensus algorithms land here.
        if a[0] <= 0.0 || !a[0].is_finite() {
            return Err(Error::Singular { context: context.to_string() });
        }
        return Ok(vec![rhs[0] / a[0]]);
    }
    // Lower-triangular factor L with a = L L^T.
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Singular { context: context.to_string() });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // Forward substitution: L y = rhs.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    // Back substitution: L^T x = y.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

/// Dense row-major matrix-vector product.
pub(crate) fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(x.len(), n);
    (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
        .collect()
}
