//! Largest eigenvalue of a symmetric nonnegative operator.
//!
//! For a symmetric matrix with nonnegative entries the largest eigenvalue is
//! the spectral radius (Perron–Frobenius), but `-λ₁` may also be an eigenvalue
//! (bipartite supports), in which case plain power iteration oscillates. We
//! iterate with `B = A + sI`, `s = R/2` where `R` is the largest row sum, so
//! that `λ₁ + s` strictly dominates `|λ + s|` for every other eigenvalue `λ`.
//! With `θ = xᵀBx` for unit `x` we stop when
//!
//! ```text
//! ‖B x − θ x‖ ≤ tol · (θ − s)
//! ```
//!
//! and return `θ − s`; the residual bounds the distance from `θ` to the
//! spectrum of `B`.
//!
//! Near-degenerate top eigenvalues make any power method slow. The dense
//! wrapper falls back to a full symmetric eigendecomposition for small
//! matrices when the iteration budget runs out.

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Largest dimension handled by the eigendecomposition fallback.
pub const DENSE_FALLBACK_MAX_DIM: usize = 256;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest eigenvalue of the symmetric nonnegative operator `matvec` of
/// dimension `dim`, by shifted power iteration.
///
/// `matvec(x, y)` must overwrite `y` with `A x`. The start vector is all ones
/// with `1e-3` added to coordinate 0.
pub fn top_eigenvalue<F>(dim: usize, mut matvec: F, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Ok(0.0);
    }
    let mut y = vec![0.0; dim];
    matvec(&vec![1.0; dim], &mut y);
    let row_max = y.iter().copied().fold(0.0, f64::max);
    if row_max == 0.0 {
        return Ok(0.0);
    }
    let shift = 0.5 * row_max;

    let mut x = vec![1.0; dim];
    x[0] += 1e-3;
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let mut estimate = 0.0;
    for _ in 0..max_iter {
        matvec(&x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += shift * xi;
        }
        let theta: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        estimate = theta - shift;
        let residual = y
            .iter()
            .zip(&x)
            .map(|(yi, xi)| (yi - theta * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * estimate {
            return Ok(estimate);
        }
        let ny = norm(&y);
        if !ny.is_finite() {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: max_iter,
        estimate,
    })
}

/// All eigenvalues of a symmetric row-major matrix (dense symmetric QR).
pub fn symmetric_eigenvalues(dim: usize, matrix: &[f64]) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(dim, dim, matrix);
    nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}

/// [`top_eigenvalue`] for a dense row-major `dim × dim` matrix, with the
/// eigendecomposition fallback for `dim ≤ DENSE_FALLBACK_MAX_DIM`.
pub fn top_eigenvalue_dense(dim: usize, matrix: &[f64], tol: f64, max_iter: usize) -> Result<f64> {
    debug_assert_eq!(matrix.len(), dim * dim);
    let power = top_eigenvalue(
        dim,
        |x, y| {
            for (i, yi) in y.iter_mut().enumerate() {
                let row = &matrix[i * dim..(i + 1) * dim];
                *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
            }
        },
        tol,
        max_iter,
    );
    match power {
        Err(Error::NoConvergence { .. }) if dim <= DENSE_FALLBACK_MAX_DIM => {
            log::debug!("power iteration stalled at dim {dim}; using a full eigendecomposition");
            Ok(symmetric_eigenvalues(dim, matrix).into_iter().fold(0.0, f64::max))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_closed_form() {
        for &(a, b) in &[(1.0, 0.5), (0.0, 2.0), (3.0, 0.0), (2.0, 2.0), (0.3, 0.01), (0.3, 1e-6)] {
            let m = [a, b, b, a];
            let got = top_eigenvalue_dense(2, &m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let want = f64::max((a + b).abs(), (a - b).abs());
            assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{a} {b}: {got} vs {want}");
        }
    }

    #[test]
    fn near_degenerate_stalls_without_fallback() {
        // Eigenvalues 0.300001 and 0.299999.
        let m = [0.3, 1e-6, 1e-6, 0.3];
        let mv = |x: &[f64], y: &mut [f64]| {
            y[0] = m[0] * x[0] + m[1] * x[1];
            y[1] = m[2] * x[0] + m[3] * x[1];
        };
        match top_eigenvalue(2, mv, 1e-15, 50) {
            Err(Error::NoConvergence { estimate, iterations, .. }) => {
                assert_eq!(iterations, 50);
                assert!((estimate - 0.300001).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eigendecomposition_matches_closed_forms() {
        let mut ev = symmetric_eigenvalues(3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        ev.sort_by(f64::total_cmp);
        let want = [-(2f64.sqrt()), 0.0, 2f64.sqrt()];
        for (g, w) in ev.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        let mut ev = symmetric_eigenvalues(2, &[2.0, 0.0, 0.0, 5.0]);
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![2.0, 5.0]);
    }

    #[test]
    fn bipartite_support_does_not_oscillate() {
        // Path on 3 vertices: eigenvalues ±√2, 0.
        let m = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let got = top_eigenvalue_dense(3, &m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((got - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn complete_bipartite() {
        // K_{3,5}: top eigenvalue √15.
        let n = 8;
        let mut m = vec![0.0; n * n];
        for i in 0..3 {
            for j in 3..n {
                m[i * n + j] = 1.0;
                m[j * n + i] = 1.0;
            }
        }
        let got = top_eigenvalue_dense(n, &m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((got - 15f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix() {
        assert_eq!(top_eigenvalue_dense(3, &[0.0; 9], DEFAULT_TOL, 10).unwrap(), 0.0);
    }
}
