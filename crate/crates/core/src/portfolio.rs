//! Long-only mean-variance optimization and the rolling out-of-sample
//! backtest.

use rayon::prelude::*;

use crate::attribution::PortfolioWeights;
use crate::error::{Error, Result};
use crate::ingest::{slice_periods, PeriodScheme, ReturnPanel};
use crate::matstat::{cholesky, scatter_matrix, SymMatrix};
use crate::posterior::PriorSpec;
use crate::shrinkage::{estimate, Estimator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// γ in ωᵀμ − (γ/2)·ωᵀΣω.
    pub risk_aversion: f64,
    /// Bound on the ∞-norm of the projected-gradient residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Weights at or below this count as zero for portfolio size.
    pub zero_weight_threshold: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            risk_aversion: 1.0,
            tol: 1e-8,
            max_iter: 10_000,
            zero_weight_threshold: 1e-6,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.risk_aversion > 0.0) || !self.risk_aversion.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "risk aversion must be positive, got {}",
                self.risk_aversion
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Euclidean projection onto {x ≥ 0, Σx = 1} (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut x: Vec<f64> = v.iter().map(|vi| (vi - theta).max(0.0)).collect();
    // absorb rounding so the sum is 1 to the last bit or two
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|xi| *xi /= sum);
    x
}

/// Full solver output, returned whether or not the tolerance was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationOutcome {
    /// Always on the simplex.
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Objective after each accepted iterate, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

struct Problem<'a> {
    mu: &'a [f64],
    sigma: &'a SymMatrix,
    gamma: f64,
}

impl Problem<'_> {
    fn objective(&self, x: &[f64]) -> f64 {
        let ret: f64 = self.mu.iter().zip(x).map(|(a, b)| a * b).sum();
        ret - 0.5 * self.gamma * self.sigma.quad_form(x).expect("dims checked")
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let sx = self.sigma.mul_vec(x).expect("dims checked");
        self.mu.iter().zip(sx).map(|(m, s)| m - self.gamma * s).collect()
    }

    fn step(&self, x: &[f64], lip: f64) -> Vec<f64> {
        let g = self.gradient(x);
        let y: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi + gi / lip).collect();
        project_to_simplex(&y)
    }

    /// lip·‖P(x + ∇f/lip) − x‖∞, zero exactly at the constrained optimum.
    fn residual(&self, x: &[f64], lip: f64) -> f64 {
        self.step(x, lip)
            .iter()
            .zip(x)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
            * lip
    }
}

/// Maximizes ωᵀμ − (γ/2)·ωᵀΣω over the simplex by accelerated projected
/// gradient with function-value restarts, which keeps the objective
/// non-decreasing across accepted iterates.
pub fn solve_mean_variance(mu: &[f64], sigma: &SymMatrix, cfg: &OptimizerConfig) -> Result<OptimizationOutcome> {
    cfg.validate()?;
    let p = sigma.dim();
    if mu.len() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: mu.len() });
    }
    cholesky(sigma)?;
    let prob = Problem {
        mu,
        sigma,
        gamma: cfg.risk_aversion,
    };
    let mut lip = 1.01 * cfg.risk_aversion * sigma.power_iteration(500, 1e-10);

    let mut x = vec![1.0 / p as f64; p];
    let mut fx = prob.objective(&x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut trace = vec![fx];
    let mut residual = prob.residual(&x, lip);
    let mut iterations = 0;

    while residual > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let mut z = prob.step(&y, lip);
        let mut fz = prob.objective(&z);
        if fz < fx {
            // momentum overshot: plain projected-gradient step from x, with
            // the step halved until the ascent property holds
            t = 1.0;
            let mut tries = 0;
            loop {
                z = prob.step(&x, lip);
                fz = prob.objective(&z);
                if fz >= fx {
                    break;
                }
                tries += 1;
                if tries > 60 {
                    z = x.clone();
                    fz = fx;
                    break;
                }
                lip *= 2.0;
            }
            y = z.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = z.iter().zip(&x).map(|(zi, xi)| zi + beta * (zi - xi)).collect();
            t = t_next;
        }
        x = z;
        fx = fz;
        trace.push(fx);
        residual = prob.residual(&x, lip);
    }
    Ok(OptimizationOutcome {
        converged: residual <= cfg.tol,
        weights: x,
        iterations,
        residual,
        objective_trace: trace,
    })
}

/// Optimal long-only weights; `NoConvergence` if the residual is still
/// above `tol` after `max_iter` iterations.
pub fn optimize_weights(mu: &[f64], sigma: &SymMatrix, cfg: &OptimizerConfig) -> Result<PortfolioWeights> {
    let out = solve_mean_variance(mu, sigma, cfg)?;
    if !out.converged {
        return Err(Error::NoConvergence {
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    PortfolioWeights::new(out.weights)
}

/// Number of weights above the zero threshold.
pub fn portfolio_size(w: &PortfolioWeights, threshold: f64) -> usize {
    w.as_slice().iter().filter(|x| **x > threshold).count()
}

/// (mean − risk_free)/sd with the n − 1 denominator, per observation period.
pub fn sharpe_ratio(period_returns: &[f64], risk_free: f64) -> Result<f64> {
    let n = period_returns.len();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, actual: n });
    }
    let mean = period_returns.iter().sum::<f64>() / n as f64;
    let var = period_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    // relative cutoff so constant series with rounding noise count as flat
    if sd == 0.0 || sd <= 1e-14 * mean.abs() {
        return Err(Error::ZeroDispersion);
    }
    Ok((mean - risk_free) / sd)
}

/// One out-of-sample row.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    /// Label of the holding (out-of-sample) period.
    pub period_label: String,
    /// Cumulative log return over the holding period, percent.
    pub portfolio_return: f64,
    /// Realized volatility over the holding period, percent
    /// (per-observation SD scaled by √n).
    pub portfolio_risk: f64,
    /// portfolio_return / portfolio_risk.
    pub sharpe: f64,
    pub portfolio_size: usize,
    pub market_size: usize,
    /// Model volatility √(ωᵀΣ̂ω) over the holding period, percent.
    pub ex_ante_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub scheme: PeriodScheme,
    pub estimator: Estimator,
    pub prior: PriorSpec,
    pub optimizer: OptimizerConfig,
}

/// Estimate on period k, hold through period k + 1.
///
/// The tradable universe for each step is the set of sources with complete
/// data in both periods.
pub fn backtest(panel: &ReturnPanel, cfg: &BacktestConfig) -> Result<Vec<BacktestReport>> {
    let slices = slice_periods(panel, &cfg.scheme)?;
    if slices.len() < 2 {
        return Err(Error::InsufficientPeriods(slices.len()));
    }
    (0..slices.len() - 1)
        .into_par_iter()
        .map(|k| {
            let (est, hold) = (&slices[k].panel, &slices[k + 1].panel);
            let est_idx: Vec<usize> = (0..est.n_sources())
                .filter(|&j| hold.sources().contains(&est.sources()[j]))
                .collect();
            let hold_idx: Vec<usize> = est_idx
                .iter()
                .map(|&j| {
                    hold.sources()
                        .iter()
                        .position(|s| *s == est.sources()[j])
                        .expect("filtered above")
                })
                .collect();
            if est_idx.is_empty() {
                return Err(Error::EmptyPeriod(format!(
                    "{} -> {} (no common sources)",
                    slices[k].label,
                    slices[k + 1].label
                )));
            }
            let est = est.select_sources(&est_idx);
            let hold = hold.select_sources(&hold_idx);
            run_step(&est, &hold, &slices[k + 1].label, cfg)
        })
        .collect()
}

fn run_step(est: &ReturnPanel, hold: &ReturnPanel, label: &str, cfg: &BacktestConfig) -> Result<BacktestReport> {
    let n = est.n_obs();
    let s = scatter_matrix(est.values(), n, est.n_sources())?;
    let sigma_hat = estimate(cfg.estimator, &s, n, &cfg.prior)?.matrix;
    let mu_hat = est.mean_returns();
    let w = optimize_weights(&mu_hat, &sigma_hat, &cfg.optimizer)?;

    let realized: Vec<f64> = (0..hold.n_obs())
        .map(|t| hold.row(t).iter().zip(w.as_slice()).map(|(r, x)| r * x).sum())
        .collect();
    let horizon = (realized.len() as f64).sqrt();
    let sharpe = sharpe_ratio(&realized, 0.0)? * horizon;
    let mean = realized.iter().sum::<f64>() / realized.len() as f64;
    let sd = (realized.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (realized.len() as f64 - 1.0)).sqrt();
    Ok(BacktestReport {
        period_label: label.to_string(),
        portfolio_return: 100.0 * realized.iter().sum::<f64>(),
        portfolio_risk: 100.0 * sd * horizon,
        sharpe,
        portfolio_size: portfolio_size(&w, cfg.optimizer.zero_weight_threshold),
        market_size: est.n_sources(),
        ex_ante_risk: 100.0 * sigma_hat.quad_form(w.as_slice())?.sqrt() * horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection() {
        assert_eq!(project_to_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_to_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let x = project_to_simplex(&[0.3, -1.0, 0.9, 0.1]);
        assert!(x.iter().all(|v| *v >= 0.0));
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // already feasible points are fixed
        let x = project_to_simplex(&[0.2, 0.3, 0.5]);
        assert!((x[0] - 0.2).abs() < 1e-15 && (x[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equal_inputs_give_equal_weights() {
        for p in [1, 2, 5, 17] {
            let w = optimize_weights(&vec![0.01; p], &SymMatrix::identity(p), &OptimizerConfig::default()).unwrap();
            assert!(w.as_slice().iter().all(|x| (x - 1.0 / p as f64).abs() < 1e-10));
        }
    }

    #[test]
    fn two_asset_minimum_variance() {
        let w = optimize_weights(
            &[0.0, 0.0],
            &SymMatrix::from_diagonal(&[1.0, 100.0]),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!((w.as_slice()[0] - 100.0 / 101.0).abs() < 1e-8);
        assert!((w.as_slice()[1] - 1.0 / 101.0).abs() < 1e-8);
    }

    #[test]
    fn corner_solution() {
        let cfg = OptimizerConfig {
            risk_aversion: 0.001,
            ..Default::default()
        };
        let w = optimize_weights(&[1.0, 0.0], &SymMatrix::identity(2), &cfg).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = OptimizerConfig::default();
        let indefinite = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            optimize_weights(&[0.0, 0.0], &indefinite, &cfg),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(optimize_weights(&[0.0], &SymMatrix::identity(2), &cfg).is_err());
        let bad = OptimizerConfig { risk_aversion: 0.0, ..cfg };
        assert!(optimize_weights(&[0.0, 0.0], &SymMatrix::identity(2), &bad).is_err());
    }

    #[test]
    fn no_convergence_reported() {
        let cfg = OptimizerConfig {
            max_iter: 1,
            tol: 1e-300,
            ..Default::default()
        };
        let sigma = SymMatrix::from_rows(&[vec![1.0, 0.9], vec![0.9, 2.0]]).unwrap();
        let out = solve_mean_variance(&[0.3, 0.1], &sigma, &cfg).unwrap();
        assert!(!out.converged);
        assert!((out.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(matches!(
            optimize_weights(&[0.3, 0.1], &sigma, &cfg),
            Err(Error::NoConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn sharpe_examples() {
        // mean 0.02, sd 0.01
        let a = 0.01 / 2f64.sqrt();
        assert!((sharpe_ratio(&[0.02 - a, 0.02 + a], 0.0).unwrap() - 2.0).abs() < 1e-12);
        let r = [0.01, 0.03, 0.01, 0.03];
        let sd = (4.0 * 0.0001 / 3.0f64).sqrt();
        assert!((sharpe_ratio(&r, 0.0).unwrap() - 0.02 / sd).abs() < 1e-12);
        assert!(matches!(sharpe_ratio(&[0.02; 5], 0.0), Err(Error::ZeroDispersion)));
        assert_eq!(sharpe_ratio(&[-1.0, 1.0], 0.0).unwrap(), 0.0);
        assert!(sharpe_ratio(&[1.0], 0.0).is_err());
    }
}
