//! Inverse-Wishart prior and posterior for the covariance matrix.
//!
//! With prior Σ ~ W⁻¹(n₀, Ψ) and scatter S ~ W(n − 1, Σ), the posterior is
//! Σ | S ~ W⁻¹(n₀ + n − 1, Ψ + S). It is proper once n₀ + n − 1 > p − 1,
//! which the prior degrees-of-freedom rule guarantees even when n ≤ p.

use crate::error::{Error, Result};
use crate::matstat::{cholesky, InverseWishartSampler, SymMatrix};

/// Which matrix the prior scale Ψ is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetKind {
    /// Ψ = I_p
    IdentityScaled,
    /// Ψ = Diag(s₁₁, …, s_pp), the sample-variance diagonal of S.
    #[default]
    SampleVarianceDiag,
}

/// Prior configuration: slack `c` and the Ψ target. `n0` is derived from
/// the data dimensions unless pinned explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub c: f64,
    pub target_kind: TargetKind,
    /// Overrides the degrees-of-freedom rule when set.
    pub n0_override: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            c: 1.5,
            target_kind: TargetKind::SampleVarianceDiag,
            n0_override: None,
        }
    }
}

impl PriorSpec {
    pub fn n0(&self, n: usize, p: usize) -> Result<f64> {
        match self.n0_override {
            Some(n0) if n0 > 0.0 && n0.is_finite() => Ok(n0),
            Some(n0) => Err(Error::InvalidConfig(format!("n0 must be positive, got {n0}"))),
            None => select_prior_df(n, p, self.c),
        }
    }
}

/// n₀ = (p − n) + c when n ≤ p, otherwise just c.
pub fn select_prior_df(n: usize, p: usize, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidSlack(c));
    }
    Ok(if n <= p { (p - n) as f64 + c } else { c })
}

/// Ψ for the given target kind.
pub fn build_prior_scale(s: &SymMatrix, kind: TargetKind) -> Result<SymMatrix> {
    match kind {
        TargetKind::IdentityScaled => Ok(SymMatrix::identity(s.dim())),
        TargetKind::SampleVarianceDiag => {
            let diag = s.diagonal();
            if let Some((index, &value)) = diag.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::ZeroVariance { index, value });
            }
            Ok(SymMatrix::from_diagonal(&diag))
        }
    }
}

/// Inverse-Wishart posterior W⁻¹(ν, Ψ + S).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    nu: f64,
    scale: SymMatrix,
    n: usize,
    n0: f64,
}

impl PosteriorParams {
    /// Builds a posterior directly from its parameters, for callers that
    /// already hold ν and the scale. Properness and PD are still enforced.
    pub fn from_parts(nu: f64, scale: SymMatrix) -> Result<Self> {
        let p = scale.dim();
        if !(nu > p as f64 - 1.0) || !nu.is_finite() {
            return Err(Error::ImproperPosterior { nu, dim: p });
        }
        cholesky(&scale)?;
        Ok(Self {
            nu,
            scale,
            n: 0,
            n0: f64::NAN,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn scale(&self) -> &SymMatrix {
        &self.scale
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    pub fn sampler(&self) -> Result<InverseWishartSampler> {
        InverseWishartSampler::new(self.nu, &self.scale)
    }

    /// Posterior mean (Ψ + S)/(ν − p − 1); exists only for ν > p + 1.
    pub fn mean(&self) -> Option<SymMatrix> {
        let denom = self.nu - self.dim() as f64 - 1.0;
        (denom > 0.0).then(|| self.scale.scaled(1.0 / denom))
    }

    /// Posterior mode (Ψ + S)/(ν + p + 1).
    pub fn mode(&self) -> SymMatrix {
        self.scale.scaled(1.0 / (self.nu + self.dim() as f64 + 1.0))
    }
}

/// ν = n₀ + n − 1, scale = Ψ + S; rejects improper posteriors.
pub fn posterior_params(s: &SymMatrix, psi: &SymMatrix, n: usize, n0: f64) -> Result<PosteriorParams> {
    let p = s.dim();
    if psi.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: psi.dim(),
        });
    }
    let nu = n0 + n as f64 - 1.0;
    if !(nu > p as f64 - 1.0) || !nu.is_finite() {
        return Err(Error::ImproperPosterior { nu, dim: p });
    }
    cholesky(psi)?;
    let scale = psi.add(s)?;
    cholesky(&scale)?;
    Ok(PosteriorParams { nu, scale, n, n0 })
}

/// Full data → posterior pipeline for a scatter matrix S from n rows.
pub fn posterior_from_scatter(s: &SymMatrix, n: usize, prior: &PriorSpec) -> Result<PosteriorParams> {
    let n0 = prior.n0(n, s.dim())?;
    let psi = build_prior_scale(s, prior.target_kind)?;
    posterior_params(s, &psi, n, n0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_df_rule() {
        assert_eq!(select_prior_df(3, 5, 1.5).unwrap(), 3.5);
        assert_eq!(select_prior_df(5, 5, 2.0).unwrap(), 2.0);
        assert_eq!(select_prior_df(10, 5, 2.0).unwrap(), 2.0);
        assert!(matches!(select_prior_df(3, 5, 0.0), Err(Error::InvalidSlack(_))));
        assert!(select_prior_df(3, 5, -1.0).is_err());
        assert!(select_prior_df(3, 5, f64::NAN).is_err());
    }

    #[test]
    fn prior_scale_targets() {
        let s = SymMatrix::from_diagonal(&[2.0, 3.0]);
        assert_eq!(build_prior_scale(&s, TargetKind::SampleVarianceDiag).unwrap(), s);
        let full = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 3.0]]).unwrap();
        assert_eq!(build_prior_scale(&full, TargetKind::SampleVarianceDiag).unwrap(), s);
        assert_eq!(
            build_prior_scale(&full, TargetKind::IdentityScaled).unwrap(),
            SymMatrix::identity(2)
        );
        let zero = SymMatrix::from_diagonal(&[0.0, 3.0]);
        assert!(matches!(
            build_prior_scale(&zero, TargetKind::SampleVarianceDiag),
            Err(Error::ZeroVariance { index: 0, .. })
        ));
    }

    #[test]
    fn posterior_proper_and_improper() {
        let s = SymMatrix::zeros(5);
        let psi = SymMatrix::identity(5);
        let post = posterior_params(&s, &psi, 3, 3.5).unwrap();
        assert_eq!(post.nu(), 5.5);
        assert!(matches!(
            posterior_params(&s, &psi, 3, 0.5),
            Err(Error::ImproperPosterior { .. })
        ));
    }

    #[test]
    fn posterior_scale_is_sum() {
        let i2 = SymMatrix::identity(2);
        let post = posterior_params(&i2, &i2, 3, 4.0).unwrap();
        assert_eq!(post.nu(), 6.0);
        assert_eq!(post.scale(), &SymMatrix::from_diagonal(&[2.0, 2.0]));
    }

    #[test]
    fn rule_never_yields_improper_posterior() {
        for p in 1..=30 {
            for n in 1..=p {
                for &c in &[1e-6, 0.1, 0.5, 1.0, 1.5, 10.0] {
                    let n0 = select_prior_df(n, p, c).unwrap();
                    let s = SymMatrix::zeros(p);
                    assert!(
                        posterior_params(&s, &SymMatrix::identity(p), n, n0).is_ok(),
                        "n={n} p={p} c={c}"
                    );
                }
            }
        }
    }
}
