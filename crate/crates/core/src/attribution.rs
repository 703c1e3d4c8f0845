//! Monte Carlo risk attribution over the inverse-Wishart posterior.
//!
//! Replication i draws Σ⁽ⁱ⁾ from the posterior on its own [`RngStream`]
//! `(seed, i)` and computes total volatility σₚ = √(ωᵀΣω), the marginal
//! contributions ϱ = Σω/σₚ and the contributions ζⱼ = ωⱼϱⱼ, which sum to
//! σₚ. Replications are independent, so they run in parallel and the
//! output does not depend on the worker count.

use rayon::prelude::*;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matstat::{RngStream, SymMatrix};
use crate::posterior::PosteriorParams;

/// Tolerance on Σω = 1.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Replications handled per parallel work item.
const BLOCK: usize = 256;

/// Offset of the predictive-return streams, so they never coincide with the
/// attribution streams of the same seed.
const TAIL_STREAM_OFFSET: u64 = 1 << 63;

/// Long-only fully invested weights: ωⱼ ≥ 0 and Σωⱼ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        if let Some((j, w)) = omega.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!("weight {j} is {w}, must be >= 0")));
        }
        let sum: f64 = omega.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(omega))
    }

    /// Rescales non-negative raw weights (e.g. percentages) to sum to one.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        Self::new(raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn equal(p: usize) -> Self {
        Self(vec![1.0 / p as f64; p])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_dims(sigma: &SymMatrix, w: &PortfolioWeights) -> Result<()> {
    if sigma.dim() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            actual: w.len(),
        });
    }
    Ok(())
}

pub fn portfolio_volatility(sigma: &SymMatrix, w: &PortfolioWeights) -> Result<f64> {
    check_dims(sigma, w)?;
    Ok(sigma.quad_form(w.as_slice())?.sqrt())
}

/// σₚ with its per-source marginal (ϱ) and total (ζ) contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskDecomposition {
    pub volatility: f64,
    pub mctr: Vec<f64>,
    pub cctr: Vec<f64>,
}

pub fn risk_decomposition(sigma: &SymMatrix, w: &PortfolioWeights) -> Result<RiskDecomposition> {
    check_dims(sigma, w)?;
    let mut mctr = vec![0.0; w.len()];
    let mut cctr = vec![0.0; w.len()];
    let volatility = decompose_into(sigma, w.as_slice(), &mut mctr, &mut cctr);
    Ok(RiskDecomposition {
        volatility,
        mctr,
        cctr,
    })
}

fn decompose_into(sigma: &SymMatrix, w: &[f64], mctr: &mut [f64], cctr: &mut [f64]) -> f64 {
    let p = w.len();
    let s = sigma.as_slice();
    for i in 0..p {
        mctr[i] = s[i * p..(i + 1) * p].iter().zip(w).map(|(a, b)| a * b).sum();
    }
    let var: f64 = mctr.iter().zip(w).map(|(a, b)| a * b).sum();
    let vol = var.sqrt();
    for j in 0..p {
        mctr[j] /= vol;
        cctr[j] = w[j] * mctr[j];
    }
    vol
}

/// N posterior draws of (σₚ, ϱ, ζ), in replication order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionSamples {
    n_sims: usize,
    dim: usize,
    seed: u64,
    sigma_p: Vec<f64>,
    // N×p row-major
    mctr: Vec<f64>,
    cctr: Vec<f64>,
}

impl AttributionSamples {
    /// Assembles samples from precomputed draws. `mctr` and `cctr` are
    /// N×p row-major.
    pub fn from_parts(dim: usize, seed: u64, sigma_p: Vec<f64>, mctr: Vec<f64>, cctr: Vec<f64>) -> Result<Self> {
        let n = sigma_p.len();
        for len in [mctr.len(), cctr.len()] {
            if len != n * dim {
                return Err(Error::DimensionMismatch {
                    expected: n * dim,
                    actual: len,
                });
            }
        }
        Ok(Self {
            n_sims: n,
            dim,
            seed,
            sigma_p,
            mctr,
            cctr,
        })
    }

    pub fn n_sims(&self) -> usize {
        self.n_sims
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma_p(&self) -> &[f64] {
        &self.sigma_p
    }

    /// All MCTR draws, N×p row-major.
    pub fn mctr(&self) -> &[f64] {
        &self.mctr
    }

    /// All CCTR draws, N×p row-major.
    pub fn cctr(&self) -> &[f64] {
        &self.cctr
    }

    pub fn mctr_row(&self, i: usize) -> &[f64] {
        &self.mctr[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cctr_row(&self, i: usize) -> &[f64] {
        &self.cctr[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mctr_column(&self, j: usize) -> Vec<f64> {
        self.mctr.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn cctr_column(&self, j: usize) -> Vec<f64> {
        self.cctr.iter().skip(j).step_by(self.dim).copied().collect()
    }
}

/// Runs `f` on a dedicated pool with `threads` workers.
pub fn with_thread_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Monte Carlo attribution over the posterior, on the current rayon pool.
pub fn run_mc(post: &PosteriorParams, w: &PortfolioWeights, n_sims: usize, seed: u64) -> Result<AttributionSamples> {
    if n_sims == 0 {
        return Err(Error::ZeroSims);
    }
    let p = post.dim();
    if w.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: w.len(),
        });
    }
    let sampler = post.sampler()?;
    let omega = w.as_slice();
    let mut sigma_p = vec![0.0; n_sims];
    let mut mctr = vec![0.0; n_sims * p];
    let mut cctr = vec![0.0; n_sims * p];
    sigma_p
        .par_chunks_mut(BLOCK)
        .zip(mctr.par_chunks_mut(BLOCK * p))
        .zip(cctr.par_chunks_mut(BLOCK * p))
        .enumerate()
        .for_each(|(block, ((vol, m), c))| {
            for k in 0..vol.len() {
                let i = (block * BLOCK + k) as u64;
                let draw = sampler.sample(&mut RngStream::new(seed, i).rng());
                vol[k] = decompose_into(
                    &draw,
                    omega,
                    &mut m[k * p..(k + 1) * p],
                    &mut c[k * p..(k + 1) * p],
                );
            }
        });
    AttributionSamples::from_parts(p, seed, sigma_p, mctr, cctr)
}

/// Fraction of draws strictly above zero.
pub fn prob_positive(draws: &[f64]) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    draws.iter().filter(|v| **v > 0.0).count() as f64 / draws.len() as f64
}

/// Fraction of draws strictly below zero.
pub fn prob_negative(draws: &[f64]) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    draws.iter().filter(|v| **v < 0.0).count() as f64 / draws.len() as f64
}

/// P(ζⱼ > 0) ≈ (1/N)·#{i : ζⱼ⁽ⁱ⁾ > 0}. Exact zeros count as not positive.
pub fn prob_positive_cctr(samples: &AttributionSamples) -> Vec<f64> {
    (0..samples.dim())
        .map(|j| prob_positive(&samples.cctr_column(j)))
        .collect()
}

pub fn prob_positive_mctr(samples: &AttributionSamples) -> Vec<f64> {
    (0..samples.dim())
        .map(|j| prob_positive(&samples.mctr_column(j)))
        .collect()
}

/// Mean, SD and 95% percentile interval of a set of draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Linear-interpolation quantile of sorted data, position (N − 1)·q.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(draws: &[f64]) -> Result<PosteriorSummary> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::TooFewDraws { needed: 2, actual: n });
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(PosteriorSummary {
        mean,
        sd: var.sqrt(),
        ci_lo: quantile_sorted(&sorted, 0.025),
        ci_hi: quantile_sorted(&sorted, 0.975),
    })
}

/// Value at Risk and Expected Shortfall, both as positive losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRisk {
    pub level: f64,
    pub var: f64,
    pub esf: f64,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.5 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    Ok(())
}

/// VaR = −(1 − level) quantile of the returns; ESF = mean loss at or
/// beyond VaR.
pub fn var_esf(returns: &[f64], level: f64) -> Result<TailRisk> {
    check_level(level)?;
    if returns.is_empty() {
        return Err(Error::TooFewDraws { needed: 1, actual: 0 });
    }
    let mut losses: Vec<f64> = returns.iter().map(|r| -r).collect();
    losses.sort_by(f64::total_cmp);
    let var = quantile_sorted(&losses, level);
    let tail: Vec<f64> = losses.iter().copied().filter(|l| *l >= var).collect();
    let esf = tail.iter().sum::<f64>() / tail.len() as f64;
    Ok(TailRisk { level, var, esf })
}

/// Posterior-predictive portfolio returns: Σ⁽ⁱ⁾ from the posterior, then
/// r⁽ⁱ⁾ ~ N(μ̂, Σ⁽ⁱ⁾) and Rₚ = ωᵀr⁽ⁱ⁾.
///
/// Only the projection ωᵀr is needed, and ωᵀr ~ N(ωᵀμ̂, ωᵀΣ⁽ⁱ⁾ω), so each
/// draw is ωᵀμ̂ + σₚ⁽ⁱ⁾·z without factoring Σ⁽ⁱ⁾.
pub fn predictive_returns(
    post: &PosteriorParams,
    w: &PortfolioWeights,
    mu_hat: &[f64],
    n_sims: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_sims == 0 {
        return Err(Error::ZeroSims);
    }
    let p = post.dim();
    for len in [w.len(), mu_hat.len()] {
        if len != p {
            return Err(Error::DimensionMismatch { expected: p, actual: len });
        }
    }
    let sampler = post.sampler()?;
    let omega = w.as_slice();
    let center: f64 = omega.iter().zip(mu_hat).map(|(a, b)| a * b).sum();
    let mut out = vec![0.0; n_sims];
    out.par_chunks_mut(BLOCK).enumerate().for_each(|(block, chunk)| {
        for (k, r) in chunk.iter_mut().enumerate() {
            let i = (block * BLOCK + k) as u64;
            let mut rng = RngStream::new(seed, TAIL_STREAM_OFFSET | i).rng();
            let draw = sampler.sample(&mut rng);
            let vol = draw.quad_form(omega).expect("dimension checked").sqrt();
            let z: f64 = StandardNormal.sample(&mut rng);
            *r = center + vol * z;
        }
    });
    Ok(out)
}

pub fn tail_risk(
    post: &PosteriorParams,
    w: &PortfolioWeights,
    mu_hat: &[f64],
    n_sims: usize,
    level: f64,
    seed: u64,
) -> Result<TailRisk> {
    check_level(level)?;
    var_esf(&predictive_returns(post, w, mu_hat, n_sims, seed)?, level)
}

/// Equal-width histogram over [min, max] of the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// bins + 1 edges
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histogram of the draws between the `trim` and `1 − trim` quantiles;
/// draws outside that range are clamped into the end bins. A small trim
/// keeps heavy tails from flattening the plot.
pub fn histogram(draws: &[f64], bins: usize, trim: f64) -> Result<Histogram> {
    if draws.is_empty() {
        return Err(Error::TooFewDraws { needed: 1, actual: 0 });
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, trim);
    let mut hi = quantile_sorted(&sorted, 1.0 - trim);
    if hi <= lo {
        hi = lo + 1e-12_f64.max(lo.abs() * 1e-12);
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
    let mut counts = vec![0usize; bins];
    for &x in draws {
        let k = ((x - lo) / width).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}
