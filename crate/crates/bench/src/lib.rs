//! Shared inputs for the criterion benchmarks.

use drem_core::{DMatrix, DVector};

/// Deterministic well-conditioned square matrix.
pub fn test_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let x = ((i * 7 + j * 3) % 11) as f64 / 11.0;
        if i == j {
            x + n as f64
        } else {
            x - 0.5
        }
    })
}

pub fn test_vector(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| 0.1 * (i as f64 + 1.0))
}
