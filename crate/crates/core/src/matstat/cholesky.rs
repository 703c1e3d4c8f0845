use crate::error::{Error, Result};

use super::SymMatrix;

/// Lower-triangular factor L with strictly positive diagonal, M = L·Lᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    // full row-major storage, upper triangle is zero
    lower: Vec<f64>,
}

/// Cholesky–Banachiewicz factorization.
///
/// A pivot `d_j` (the Schur complement before the square root) with
/// `d_j ≤ p·ε·max|m_ii|` is treated as loss of positive definiteness.
pub fn cholesky(m: &SymMatrix) -> Result<CholeskyFactor> {
    let p = m.dim();
    let max_diag = m.diagonal().iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    let threshold = p as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum();
            if i == j {
                let pivot = m.get(i, i) - dot;
                if !(pivot > threshold) {
                    return Err(Error::NotPositiveDefinite { index: i, pivot });
                }
                l[i * p + i] = pivot.sqrt();
            } else {
                l[i * p + j] = (m.get(i, j) - dot) / l[j * p + j];
            }
        }
    }
    Ok(CholeskyFactor { dim: p, lower: l })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// Row-major lower triangle (upper entries are zero).
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.lower.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// L·Lᵀ
    pub fn recompose(&self) -> SymMatrix {
        gram_lower(&self.lower, self.dim)
    }

    /// L·z
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        let p = self.dim;
        (0..p)
            .map(|i| (0..=i).map(|k| self.lower[i * p + k] * z[k]).sum())
            .collect()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// L⁻¹, row-major lower triangular.
    pub fn inverse_lower(&self) -> Vec<f64> {
        invert_lower(&self.lower, self.dim)
    }

    /// M⁻¹ = L⁻ᵀ·L⁻¹
    pub fn inverse(&self) -> SymMatrix {
        gram_upper(&self.inverse_lower(), self.dim)
    }
}

/// Inverse of a lower-triangular matrix with non-zero diagonal.
pub(crate) fn invert_lower(l: &[f64], p: usize) -> Vec<f64> {
    let mut inv = vec![0.0; p * p];
    for j in 0..p {
        inv[j * p + j] = 1.0 / l[j * p + j];
        for i in (j + 1)..p {
            let s: f64 = (j..i).map(|k| l[i * p + k] * inv[k * p + j]).sum();
            inv[i * p + j] = -s / l[i * p + i];
        }
    }
    inv
}

/// Product of two lower-triangular matrices (result lower triangular).
pub(crate) fn mul_lower(a: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            out[i * p + j] = (j..=i).map(|k| a[i * p + k] * b[k * p + j]).sum();
        }
    }
    out
}

/// T·Tᵀ for lower-triangular T.
pub(crate) fn gram_lower(t: &[f64], p: usize) -> SymMatrix {
    SymMatrix::from_lower_fn(p, |i, j| {
        // j ≤ i, so the shared support is k ≤ j
        (0..=j).map(|k| t[i * p + k] * t[j * p + k]).sum()
    })
}

/// Tᵀ·T for lower-triangular T.
pub(crate) fn gram_upper(t: &[f64], p: usize) -> SymMatrix {
    SymMatrix::from_lower_fn(p, |i, j| (i..p).map(|k| t[k * p + i] * t[k * p + j]).sum())
}
