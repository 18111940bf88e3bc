//! Weighted operator norms on the time grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 10_000;

/// `W^{1/2} A W^{-1/2}`: its Euclidean norm is the weighted norm of `A`.
pub fn weighted_conjugate(a: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| sq[i] * a[(i, j)] / sq[j])
}

/// Weighted spectral norm by power iteration on the normal operator.
///
/// Stops when the relative change of the estimate drops below [`POWER_TOL`].
pub fn spectral_norm(a: &DMatrix<f64>, weights: &[f64]) -> Result<f64> {
    if a.nrows() != a.ncols() || a.nrows() != weights.len() {
        return Err(Error::GridMismatch(format!(
            "{:?} matrix with {} weights",
            a.shape(),
            weights.len()
        )));
    }
    let b = weighted_conjugate(a, weights);
    let n = b.ncols();
    if n == 0 || b.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    // Deterministic start with no special alignment to any structure.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.5 * (1.618_033_988_749_895 * (i + 1) as f64).sin());
    x /= x.norm();
    let mut sigma = 0.0;
    let mut change = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let y = b.tr_mul(&(&b * &x));
        let next = y.norm().sqrt();
        if next == 0.0 {
            return Ok(0.0);
        }
        x = y / (next * next);
        change = (next - sigma).abs() / next;
        sigma = next;
        if change < POWER_TOL {
            return Ok(sigma);
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITER,
        change,
    })
}

/// Weighted spectral norm from the full singular value decomposition.
pub fn exact_norm(a: &DMatrix<f64>, weights: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    weighted_conjugate(a, weights).singular_values().max()
}
