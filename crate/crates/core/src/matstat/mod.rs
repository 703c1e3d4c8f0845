//! Dense symmetric-matrix kernels and the Wishart-family samplers.

mod cholesky;
mod matrix;
mod sampling;

pub use cholesky::{cholesky, CholeskyFactor};
pub use matrix::{scaled_frobenius_sq, SymMatrix};
pub use sampling::{
    sample_inverse_wishart, sample_mvn, sample_wishart, InverseWishartSampler, MvnSampler,
    RngStream, WishartSampler,
};

use crate::error::{Error, Result};
use crate::ingest::ReturnPanel;

/// Centered scatter matrix S = Σₜ (rₜ − r̄)(rₜ − r̄)ᵀ.
///
/// Not divided by n − 1: S ~ W(n − 1, Σ), and the estimators divide
/// explicitly where they need the unbiased scale.
pub fn sample_covariance(panel: &ReturnPanel) -> Result<SymMatrix> {
    if let Some(j) = panel.first_incomplete_source() {
        return Err(Error::MissingValues(panel.sources()[j].clone()));
    }
    scatter_matrix(panel.values(), panel.n_obs(), panel.n_sources())
}

/// Scatter matrix of an n×p row-major block.
pub fn scatter_matrix(values: &[f64], n: usize, p: usize) -> Result<SymMatrix> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, actual: n });
    }
    if values.len() != n * p {
        return Err(Error::DimensionMismatch {
            expected: n * p,
            actual: values.len(),
        });
    }
    let means = column_means(values, n, p);
    let centered: Vec<f64> = values
        .chunks(p)
        .flat_map(|row| row.iter().zip(&means).map(|(v, m)| v - m))
        .collect();
    Ok(SymMatrix::from_lower_fn(p, |i, j| {
        centered.chunks(p).map(|row| row[i] * row[j]).sum()
    }))
}

pub(crate) fn column_means(values: &[f64], n: usize, p: usize) -> Vec<f64> {
    let mut means = vec![0.0; p];
    for row in values.chunks(p) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    means
}
