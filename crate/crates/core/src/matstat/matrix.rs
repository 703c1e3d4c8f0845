use std::fmt;

use crate::error::{Error, Result};

/// Dense symmetric matrix, stored full row-major with exact mirror symmetry.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from a full row-major buffer. Symmetry is checked bit-for-bit.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                if data[i * dim + j].to_bits() != data[j * dim + i].to_bits() {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds from rows, e.g. `vec![vec![4.0, 2.0], vec![2.0, 3.0]]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    /// Builds from the lower triangle of `f`; the upper triangle mirrors it.
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim > 0, "SymMatrix dimension must be positive");
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    /// Symmetrizes an arbitrary square buffer as (A + Aᵀ)/2.
    pub fn symmetrize(dim: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self::from_lower_fn(dim, |i, j| {
            if i == j {
                data[i * dim + i]
            } else {
                0.5 * (data[i * dim + j] + data[j * dim + i])
            }
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_lower_fn(dim, |_, _| 0.0)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_lower_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_lower_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// The diagonal part as a matrix, Diag(m₁₁, …, m_pp).
    pub fn diagonal_matrix(&self) -> Self {
        Self::from_diagonal(&self.diagonal())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// `a·self + b·other`, elementwise. Symmetry is preserved exactly.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_vec(v)?;
        Ok(self
            .data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// vᵀ·M·v
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        let mv = self.mul_vec(v)?;
        Ok(mv.iter().zip(v).map(|(a, b)| a * b).sum())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Σᵢⱼ mᵢⱼ², i.e. tr(M·Mᵀ).
    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// ‖self − other‖_F / ‖other‖_F
    pub fn relative_frobenius_diff(&self, other: &Self) -> f64 {
        let num: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den = other.sum_sq();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Largest-magnitude eigenvalue estimate (Rayleigh quotient) by power
    /// iteration from a fixed, non-symmetric start vector. Deterministic.
    pub fn power_iteration(&self, max_iter: usize, rel_tol: f64) -> f64 {
        let p = self.dim;
        let mut v: Vec<f64> = (0..p)
            .map(|i| 1.0 + (i as f64 * 0.618_033_988_749_895).fract())
            .collect();
        let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n0);
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let w = self.mul_vec(&v).expect("dimension checked");
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            v = w.into_iter().map(|x| x / norm).collect();
            let done = (next - lambda).abs() <= rel_tol * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
        lambda
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        Ok(())
    }

    fn check_vec(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymMatrix")
            .field("dim", &self.dim)
            .field("rows", &self.to_rows())
            .finish()
    }
}

/// tr(M·Mᵀ)/p, the 1/p-normalized squared Frobenius norm used by the
/// shrinkage-constant formulas.
pub fn scaled_frobenius_sq(m: &SymMatrix) -> f64 {
    m.sum_sq() / m.dim() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_buffer() {
        let err = SymMatrix::from_row_major(2, vec![1.0, 2.0, 2.5, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { row: 1, col: 0 }));
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(
            SymMatrix::from_row_major(0, vec![]),
            Err(Error::EmptyMatrix)
        ));
    }

    #[test]
    fn scaled_norm_of_identity_is_one() {
        for p in 1..8 {
            assert_eq!(scaled_frobenius_sq(&SymMatrix::identity(p)), 1.0);
        }
    }

    #[test]
    fn scaled_norm_hand_values() {
        let m = SymMatrix::from_diagonal(&[2.0, 0.0]);
        assert_eq!(scaled_frobenius_sq(&m), 2.0);
        let m = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        assert!((scaled_frobenius_sq(&m) - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quad_form_and_mul_vec() {
        let m = SymMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(m.mul_vec(&[1.0, 1.0]).unwrap(), vec![6.0, 5.0]);
        assert_eq!(m.quad_form(&[1.0, 1.0]).unwrap(), 11.0);
        assert!(m.mul_vec(&[1.0]).is_err());
    }

    #[test]
    fn eigen_and_power_iteration_agree() {
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let ev = m.eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
        assert!((m.power_iteration(1000, 1e-14) - 3.0).abs() < 1e-9);
    }
}
