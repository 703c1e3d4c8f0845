use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::cholesky::{cholesky, gram_lower, gram_upper, invert_lower, mul_lower, CholeskyFactor};
use super::SymMatrix;

/// Identifies one independent random stream: a ChaCha8 generator keyed by
/// `seed` and positioned on stream `stream_id`.
///
/// The sequence depends on nothing but these two numbers, so replication
/// `i` of a simulation yields the same draws whichever thread runs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn check_df(df: f64, dim: usize) -> Result<()> {
    if !df.is_finite() || df <= dim as f64 - 1.0 {
        return Err(Error::DegenerateDf { df, dim });
    }
    Ok(())
}

/// Bartlett factor A: lower triangular, `A_ii = √χ²(ν − i)` and standard
/// normal entries below the diagonal. Draw order is row by row, diagonal
/// first, and is part of the reproducibility contract.
fn bartlett_factor<R: Rng + ?Sized>(df: f64, p: usize, rng: &mut R) -> Vec<f64> {
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("df validated above p - 1");
        a[i * p + i] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[i * p + j] = StandardNormal.sample(rng);
        }
    }
    a
}

/// Wishart W_p(ν, V) sampler with the Cholesky factor of V cached.
#[derive(Debug, Clone)]
pub struct WishartSampler {
    df: f64,
    chol: CholeskyFactor,
}

impl WishartSampler {
    pub fn new(df: f64, scale: &SymMatrix) -> Result<Self> {
        check_df(df, scale.dim())?;
        Ok(Self {
            df,
            chol: cholesky(scale)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    /// One draw (C·A)(C·A)ᵀ with C = chol(V) and A the Bartlett factor.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SymMatrix {
        let p = self.dim();
        let a = bartlett_factor(self.df, p, rng);
        let t = mul_lower(self.chol.lower(), &a, p);
        gram_lower(&t, p)
    }
}

/// Inverse-Wishart W⁻¹_p(ν, Ψ) sampler.
///
/// A draw is the inverse of a W_p(ν, Ψ⁻¹) draw. With C = chol(Ψ⁻¹) and
/// Bartlett factor A the Wishart draw is (CA)(CA)ᵀ, so its inverse is
/// (A⁻¹C⁻¹)ᵀ(A⁻¹C⁻¹); only triangular inverses are needed per draw.
#[derive(Debug, Clone)]
pub struct InverseWishartSampler {
    df: f64,
    dim: usize,
    // C⁻¹ where C = chol(Ψ⁻¹)
    inv_chol_of_inv_scale: Vec<f64>,
}

impl InverseWishartSampler {
    pub fn new(df: f64, scale: &SymMatrix) -> Result<Self> {
        let p = scale.dim();
        check_df(df, p)?;
        let inv_scale = cholesky(scale)?.inverse();
        let c = cholesky(&inv_scale)?;
        Ok(Self {
            df,
            dim: p,
            inv_chol_of_inv_scale: c.inverse_lower(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SymMatrix {
        let p = self.dim;
        let a = bartlett_factor(self.df, p, rng);
        let a_inv = invert_lower(&a, p);
        let t_inv = mul_lower(&a_inv, &self.inv_chol_of_inv_scale, p);
        gram_upper(&t_inv, p)
    }
}

pub fn sample_wishart<R: Rng + ?Sized>(df: f64, scale: &SymMatrix, rng: &mut R) -> Result<SymMatrix> {
    Ok(WishartSampler::new(df, scale)?.sample(rng))
}

pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &SymMatrix,
    rng: &mut R,
) -> Result<SymMatrix> {
    Ok(InverseWishartSampler::new(df, scale)?.sample(rng))
}

/// Multivariate normal sampler, `mean + L·z`.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: Vec<f64>,
    chol: CholeskyFactor,
}

impl MvnSampler {
    pub fn new(mean: &[f64], cov: &SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                actual: mean.len(),
            });
        }
        Ok(Self {
            mean: mean.to_vec(),
            chol: cholesky(cov)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.mean.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        self.chol
            .mul_vec(&z)
            .into_iter()
            .zip(&self.mean)
            .map(|(x, m)| x + m)
            .collect()
    }
}

pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], cov: &SymMatrix, rng: &mut R) -> Result<Vec<f64>> {
    Ok(MvnSampler::new(mean, cov)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> SymMatrix {
        SymMatrix::from_rows(&[
            vec![2.0, 0.3, -0.4],
            vec![0.3, 1.0, 0.1],
            vec![-0.4, 0.1, 0.5],
        ])
        .unwrap()
    }

    #[test]
    fn stream_is_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| RngStream::new(7, 3).rng().random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let x: u64 = RngStream::new(7, 3).rng().random();
        let y: u64 = RngStream::new(7, 4).rng().random();
        let z: u64 = RngStream::new(8, 3).rng().random();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn degenerate_df_rejected() {
        let mut rng = RngStream::new(0, 0).rng();
        let err = sample_wishart(0.5, &SymMatrix::identity(2), &mut rng).unwrap_err();
        assert!(matches!(err, Error::DegenerateDf { .. }));
        assert!(sample_inverse_wishart(1.0, &SymMatrix::identity(2), &mut rng).is_err());
        assert!(sample_wishart(f64::NAN, &SymMatrix::identity(2), &mut rng).is_err());
        // ν just above p − 1 is allowed
        assert!(sample_wishart(1.01, &SymMatrix::identity(2), &mut rng).is_ok());
    }

    #[test]
    fn draws_are_positive_definite() {
        let mut rng = RngStream::new(1, 0).rng();
        let w = WishartSampler::new(5.5, &spd3()).unwrap();
        let iw = InverseWishartSampler::new(5.5, &spd3()).unwrap();
        for _ in 0..1000 {
            assert!(cholesky(&w.sample(&mut rng)).is_ok());
            assert!(cholesky(&iw.sample(&mut rng)).is_ok());
        }
    }

    #[test]
    fn inverse_wishart_is_inverse_of_wishart_on_same_stream() {
        let psi = spd3();
        let psi_inv = cholesky(&psi).unwrap().inverse();
        for stream in 0..20 {
            let s = RngStream::new(42, stream);
            let w = sample_wishart(6.0, &psi_inv, &mut s.rng()).unwrap();
            let iw = sample_inverse_wishart(6.0, &psi, &mut s.rng()).unwrap();
            let w_inv = cholesky(&w).unwrap().inverse();
            assert!(
                iw.relative_frobenius_diff(&w_inv) < 1e-9,
                "stream {stream}: {:?} vs {:?}",
                iw,
                w_inv
            );
        }
    }

    #[test]
    fn mvn_rejects_bad_cov() {
        let mut rng = RngStream::new(0, 0).rng();
        let degenerate = SymMatrix::from_diagonal(&[1e-300 * 0.0]);
        assert!(matches!(
            sample_mvn(&[0.0], &degenerate, &mut rng),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(sample_mvn(&[0.0, 0.0, 0.0], &SymMatrix::identity(2), &mut rng).is_err());
    }
}
