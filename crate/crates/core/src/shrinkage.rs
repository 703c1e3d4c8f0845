//! Shrinkage covariance estimators and the closed-form shrinkage constants.
//!
//! All estimators take the unnormalized scatter matrix S and the number of
//! observations n that produced it.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matstat::{cholesky, SymMatrix};
use crate::posterior::{build_prior_scale, PriorSpec, TargetKind};

/// μ, α², β², δ² of the Ledoit–Wolf style decomposition under S ~ W(n − 1, Σ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageConstants {
    /// tr(Σ)/p
    pub mu: f64,
    /// ‖Σ − μI‖²
    pub alpha_sq: f64,
    /// (2/(n − 1))·(1/p)·Σσᵢᵢ²
    pub beta_sq: f64,
    /// α² + β²
    pub delta_sq: f64,
}

/// Shrinkage constants for a known Σ. Test harnesses use this with the
/// true covariance; [`plugin_constants`] substitutes S/(n − 1).
pub fn oracle_constants(sigma: &SymMatrix, n: usize) -> Result<ShrinkageConstants> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, actual: n });
    }
    let p = sigma.dim() as f64;
    let tr = sigma.trace();
    let mu = tr / p;
    let alpha_sq = ((sigma.sum_sq() - tr * tr / p) / p).max(0.0);
    let sum_diag_sq: f64 = sigma.diagonal().iter().map(|d| d * d).sum();
    let beta_sq = 2.0 / (n as f64 - 1.0) * sum_diag_sq / p;
    Ok(ShrinkageConstants {
        mu,
        alpha_sq,
        beta_sq,
        delta_sq: alpha_sq + beta_sq,
    })
}

pub fn plugin_constants(s: &SymMatrix, n: usize) -> Result<ShrinkageConstants> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, actual: n });
    }
    oracle_constants(&s.scaled(1.0 / (n as f64 - 1.0)), n)
}

/// Exact E‖S/(n − 1) − Σ‖² for S ~ W(n − 1, Σ):
/// (tr(Σ²) + tr(Σ)²) / (p·(n − 1)).
///
/// Reported next to `beta_sq` by the validation suite. The two agree only
/// for p = 1.
pub fn wishart_expected_sq_error(sigma: &SymMatrix, n: usize) -> f64 {
    let p = sigma.dim() as f64;
    let tr = sigma.trace();
    (sigma.sum_sq() + tr * tr) / (p * (n as f64 - 1.0))
}

/// Provenance of a covariance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// S/(n − 1)
    SampleUnbiased,
    /// (Ψ + S)/(n₀ + n + p) for a general Ψ
    PosteriorMode,
    /// ρ·Diag(S)/(n − 1) + (1 − ρ)·S/(n − 1), ρ from the closed-form optimum
    Sigma13,
    /// (Diag(S) + S)/(n₀ + n + p)
    Sigma23,
    /// q·μ̂I + (1 − q)·S/(n − 1)
    BayesLedoitWolf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: SymMatrix,
    pub estimator: EstimatorKind,
    /// Convex weight on the shrinkage target (q or ρ).
    pub weight_on_target: f64,
}

/// Posterior-mode weight q = (n₀ + p + 1)/(n₀ + n + p).
pub fn posterior_mode_weight(n: usize, p: usize, n0: f64) -> f64 {
    (n0 + p as f64 + 1.0) / (n0 + n as f64 + p as f64)
}

fn check_proper(n: usize, p: usize, n0: f64) -> Result<()> {
    let nu = n0 + n as f64 - 1.0;
    if !(nu > p as f64 - 1.0) || !nu.is_finite() {
        return Err(Error::ImproperPosterior { nu, dim: p });
    }
    Ok(())
}

/// Posterior mode (Ψ + S)/(n₀ + n + p).
pub fn posterior_mode(s: &SymMatrix, psi: &SymMatrix, n: usize, n0: f64) -> Result<CovarianceEstimate> {
    let p = s.dim();
    check_proper(n, p, n0)?;
    let denom = n0 + n as f64 + p as f64;
    Ok(CovarianceEstimate {
        matrix: psi.add(s)?.scaled(1.0 / denom),
        estimator: EstimatorKind::PosteriorMode,
        weight_on_target: posterior_mode_weight(n, p, n0),
    })
}

/// The same mode written as the convex combination
/// q·Ψ/(n₀ + p + 1) + (1 − q)·S/(n − 1). Needs n ≥ 2.
pub fn posterior_mode_shrinkage_form(s: &SymMatrix, psi: &SymMatrix, n: usize, n0: f64) -> Result<SymMatrix> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, actual: n });
    }
    let p = s.dim() as f64;
    let q = posterior_mode_weight(n, s.dim(), n0);
    psi.lin_comb(q / (n0 + p + 1.0), s, (1.0 - q) / (n as f64 - 1.0))
}

/// Unclamped closed-form ρ:
/// [((n−2)²+1)Σσᵢᵢ² − (n−2)Σσᵢᵢ − (n−1)ΣΣσᵢⱼ²] / [(n−2)²(2Σσᵢᵢ² + Σσᵢᵢ)].
pub fn rho_unclamped(sigma: &SymMatrix, n: usize) -> Result<f64> {
    if n <= 2 {
        return Err(Error::DegenerateN(n));
    }
    let m = n as f64 - 2.0;
    let diag = sigma.diagonal();
    let sum_d: f64 = diag.iter().sum();
    let sum_d2: f64 = diag.iter().map(|d| d * d).sum();
    let sum_all2 = sigma.sum_sq();
    let num = (m * m + 1.0) * sum_d2 - m * sum_d - (n as f64 - 1.0) * sum_all2;
    let den = m * m * (2.0 * sum_d2 + sum_d);
    Ok(num / den)
}

/// Closed-form ρ clamped to [0, 1].
pub fn rho_optimal(sigma: &SymMatrix, n: usize) -> Result<f64> {
    let raw = rho_unclamped(sigma, n)?;
    Ok(if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) })
}

/// Σ₁₃ = ρ·Diag(sᵢᵢ)/(n − 1) + (1 − ρ)·S/(n − 1), with ρ evaluated at the
/// plug-in Σ̂ = S/(n − 1).
pub fn estimate_sigma13(s: &SymMatrix, n: usize) -> Result<CovarianceEstimate> {
    if n <= 2 {
        return Err(Error::DegenerateN(n));
    }
    let unbiased = s.scaled(1.0 / (n as f64 - 1.0));
    let rho = rho_optimal(&unbiased, n)?;
    let matrix = unbiased
        .diagonal_matrix()
        .lin_comb(rho, &unbiased, 1.0 - rho)?;
    Ok(CovarianceEstimate {
        matrix,
        estimator: EstimatorKind::Sigma13,
        weight_on_target: rho,
    })
}

/// Σ₂₃ = (Diag(sᵢᵢ) + S)/(n₀ + n + p): the posterior mode with the
/// sample-variance prior target.
pub fn estimate_sigma23(s: &SymMatrix, n: usize, n0: f64) -> Result<CovarianceEstimate> {
    let psi = build_prior_scale(s, TargetKind::SampleVarianceDiag)?;
    let mut est = posterior_mode(s, &psi, n, n0)?;
    est.estimator = EstimatorKind::Sigma23;
    Ok(est)
}

/// q·μ̂·I + (1 − q)·S/(n − 1): the Ledoit–Wolf form with its weight
/// replaced by the posterior-mode weight q.
pub fn estimate_bayes_ledoit_wolf(s: &SymMatrix, n: usize, n0: f64) -> Result<CovarianceEstimate> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, actual: n });
    }
    let p = s.dim();
    check_proper(n, p, n0)?;
    let q = posterior_mode_weight(n, p, n0);
    let unbiased = s.scaled(1.0 / (n as f64 - 1.0));
    let mu = unbiased.trace() / p as f64;
    if !(mu > 0.0) {
        return Err(Error::ZeroVariance { index: 0, value: mu });
    }
    let matrix = SymMatrix::identity(p).lin_comb(q * mu, &unbiased, 1.0 - q)?;
    Ok(CovarianceEstimate {
        matrix,
        estimator: EstimatorKind::BayesLedoitWolf,
        weight_on_target: q,
    })
}

/// (β²μ/δ², q·μ/(n₀ + p + 1)) for a known Σ.
pub fn target_coefficients(sigma: &SymMatrix, n: usize, n0: f64) -> Result<(f64, f64)> {
    let c = oracle_constants(sigma, n)?;
    let p = sigma.dim();
    let q = posterior_mode_weight(n, p, n0);
    Ok((c.beta_sq * c.mu / c.delta_sq, q * c.mu / (n0 + p as f64 + 1.0)))
}

/// Named estimators selectable from the command line and the backtest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// S/(n − 1); fails on rank-deficient data.
    Sample,
    /// Posterior mode with the identity prior target.
    Adhoc,
    /// Ledoit–Wolf form with the Bayesian weight q.
    Blw,
    /// Σ₂₃, the Bayesian shrinkage estimator.
    Dhd,
    /// Σ₁₃, closed-form ρ weight.
    Lw13,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Sample,
        Estimator::Adhoc,
        Estimator::Blw,
        Estimator::Dhd,
        Estimator::Lw13,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Sample => "sample",
            Estimator::Adhoc => "adhoc",
            Estimator::Blw => "blw",
            Estimator::Dhd => "dhd",
            Estimator::Lw13 => "lw13",
        }
    }

    /// Whether the estimate depends on the prior degrees of freedom n₀.
    pub fn uses_prior(self) -> bool {
        matches!(self, Estimator::Adhoc | Estimator::Blw | Estimator::Dhd)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator {s:?}")))
    }
}

/// Runs the named estimator on scatter S from n observations. The result
/// is checked to be positive definite.
pub fn estimate(estimator: Estimator, s: &SymMatrix, n: usize, prior: &PriorSpec) -> Result<CovarianceEstimate> {
    let p = s.dim();
    let est = match estimator {
        Estimator::Sample => {
            if n < 2 {
                return Err(Error::TooFewObservations { needed: 2, actual: n });
            }
            CovarianceEstimate {
                matrix: s.scaled(1.0 / (n as f64 - 1.0)),
                estimator: EstimatorKind::SampleUnbiased,
                weight_on_target: 0.0,
            }
        }
        Estimator::Adhoc => posterior_mode(s, &SymMatrix::identity(p), n, prior.n0(n, p)?)?,
        Estimator::Blw => estimate_bayes_ledoit_wolf(s, n, prior.n0(n, p)?)?,
        Estimator::Dhd => estimate_sigma23(s, n, prior.n0(n, p)?)?,
        Estimator::Lw13 => estimate_sigma13(s, n)?,
    };
    cholesky(&est.matrix)?;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn constants_for_identity() {
        for p in 1..6 {
            for n in [2, 5, 30] {
                let c = oracle_constants(&SymMatrix::identity(p), n).unwrap();
                let b = 2.0 / (n as f64 - 1.0);
                assert_eq!(c.mu, 1.0);
                assert_eq!(c.alpha_sq, 0.0);
                assert!(close(c.beta_sq, b, 1e-15) && close(c.delta_sq, b, 1e-15));
            }
        }
    }

    #[test]
    fn constants_hand_values() {
        let c = oracle_constants(&SymMatrix::from_diagonal(&[1.0, 2.0]), 6).unwrap();
        assert!(close(c.mu, 1.5, 1e-15));
        assert!(close(c.alpha_sq, 0.25, 1e-15));
        assert!(close(c.beta_sq, 1.0, 1e-15));
        assert!(close(c.delta_sq, 1.25, 1e-15));
    }

    #[test]
    fn alpha_sq_matches_correlation_form() {
        // (1/p²)[(p−1)Σσᵢᵢ² + ΣΣ_{i≠j} σᵢᵢσⱼⱼ(pρᵢⱼ² − 1)]
        let s = SymMatrix::from_rows(&[
            vec![2.0, 0.6, -0.3],
            vec![0.6, 1.0, 0.2],
            vec![-0.3, 0.2, 0.5],
        ])
        .unwrap();
        let p = 3.0;
        let mut acc = 0.0;
        for i in 0..3 {
            acc += (p - 1.0) * s.get(i, i).powi(2);
            for j in 0..3 {
                if i != j {
                    let rho2 = s.get(i, j).powi(2) / (s.get(i, i) * s.get(j, j));
                    acc += s.get(i, i) * s.get(j, j) * (p * rho2 - 1.0);
                }
            }
        }
        let c = oracle_constants(&s, 10).unwrap();
        assert!(close(c.alpha_sq, acc / (p * p), 1e-13));
    }

    #[test]
    fn posterior_mode_examples() {
        let i2 = SymMatrix::identity(2);
        let est = posterior_mode(&i2, &i2, 3, 4.0).unwrap();
        assert!(est.matrix.max_abs_diff(&i2.scaled(2.0 / 9.0)) < 1e-15);
        assert!(close(est.weight_on_target, 7.0 / 9.0, 1e-15));
        assert!(close(posterior_mode_weight(3, 5, 3.5), 9.5 / 11.5, 1e-15));

        let psi = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let est = posterior_mode(&SymMatrix::zeros(3), &psi, 2, 3.0).unwrap();
        assert!(est.matrix.max_abs_diff(&psi.scaled(1.0 / 8.0)) < 1e-16);
        assert!(cholesky(&est.matrix).is_ok());

        assert!(matches!(
            posterior_mode(&i2, &i2, 1, 0.5),
            Err(Error::ImproperPosterior { .. })
        ));
    }

    #[test]
    fn rho_examples() {
        for p in [1, 3, 7] {
            let i = SymMatrix::identity(p);
            assert!(close(rho_optimal(&i, 10).unwrap(), 0.25, 1e-15));
            assert!(close(rho_unclamped(&i, 10).unwrap(), 6.0 / 24.0, 1e-15));
            assert_eq!(rho_optimal(&i, 4).unwrap(), 0.0);
            assert!(rho_unclamped(&i, 3).unwrap() < 0.0);
            assert_eq!(rho_optimal(&i, 3).unwrap(), 0.0);
            assert!(matches!(rho_optimal(&i, 2), Err(Error::DegenerateN(2))));
        }
        // symbolic value (n−4)/(3(n−2)) for Σ = I
        for n in 4..40 {
            let want = (n as f64 - 4.0) / (3.0 * (n as f64 - 2.0));
            assert!(close(rho_unclamped(&SymMatrix::identity(4), n).unwrap(), want, 1e-14));
        }
    }

    #[test]
    fn sigma13_cases() {
        // diagonal S stays diagonal with entries sᵢᵢ/(n − 1) whatever ρ is
        let s = SymMatrix::from_diagonal(&[3.0, 6.0, 9.0]);
        for n in [3, 4, 10, 50] {
            let est = estimate_sigma13(&s, n).unwrap();
            let want = s.scaled(1.0 / (n as f64 - 1.0));
            assert!(est.matrix.max_abs_diff(&want) < 1e-15);
        }
        // S/(n − 1) = I at n = 4 gives ρ = 0 and Σ₁₃ = S/(n − 1) exactly
        let s = SymMatrix::from_rows(&[vec![3.0, 0.3], vec![0.3, 3.0]]).unwrap();
        let est = estimate_sigma13(&s, 4).unwrap();
        assert_eq!(est.weight_on_target, 0.0);
        assert_eq!(est.matrix, s.scaled(1.0 / 3.0));
        assert!(matches!(estimate_sigma13(&s, 2), Err(Error::DegenerateN(2))));
    }

    #[test]
    fn sigma23_diagonal_doubles() {
        let s = SymMatrix::from_diagonal(&[1.0, 4.0]);
        let est = estimate_sigma23(&s, 5, 2.0).unwrap();
        assert!(est.matrix.max_abs_diff(&s.scaled(2.0 / 9.0)) < 1e-16);
        assert_eq!(est.estimator, EstimatorKind::Sigma23);
    }

    #[test]
    fn target_coefficient_examples() {
        let sigma = SymMatrix::identity(4).scaled(2.5);
        let (lw, _) = target_coefficients(&sigma, 10, 4.0).unwrap();
        assert!(close(lw, 2.5, 1e-15));

        let s1 = SymMatrix::from_diagonal(&[3.0]);
        let (_, bayes) = target_coefficients(&s1, 7, 2.0).unwrap();
        assert!(close(bayes, 3.0 / (2.0 + 7.0 + 1.0), 1e-15));

        // with n₀ = p the Bayesian side reduces to μ/(2p + n)
        for p in [10, 20, 50] {
            let sigma = SymMatrix::identity(p).scaled(1.7);
            let (_, bayes) = target_coefficients(&sigma, 10, p as f64).unwrap();
            assert!(close(bayes, 1.7 / (2.0 * p as f64 + 10.0), 1e-14));
        }
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("markowitz".parse::<Estimator>().is_err());
    }

    #[test]
    fn sample_estimator_fails_when_rank_deficient() {
        // n = 2 rows in p = 3 dimensions
        let s = crate::matstat::scatter_matrix(&[0.1, 0.2, 0.3, 0.0, -0.1, 0.4], 2, 3).unwrap();
        let prior = PriorSpec::default();
        assert!(matches!(
            estimate(Estimator::Sample, &s, 2, &prior),
            Err(Error::NotPositiveDefinite { .. })
        ));
        for e in [Estimator::Adhoc, Estimator::Blw, Estimator::Dhd] {
            assert!(estimate(e, &s, 2, &prior).is_ok(), "{e}");
        }
    }
}
