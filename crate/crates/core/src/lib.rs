//! Bayesian regularization of ill-posed (n < p) portfolio covariance
//! estimation and Monte Carlo risk attribution.
//!
//! The covariance gets an inverse-Wishart prior W⁻¹(n₀, Ψ); with scatter
//! matrix S from n observations the posterior W⁻¹(n₀ + n − 1, Ψ + S) stays
//! proper for n ≤ p once n₀ ≥ p − n. On top of that posterior the crate
//! provides shrinkage estimators ([`shrinkage`]), a parallel Monte Carlo
//! engine for total volatility, MCTR, CCTR and VaR/ESF ([`attribution`]),
//! long-only mean-variance weights and a rolling backtest ([`portfolio`]),
//! and CSV ingestion ([`ingest`]).

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod matstat;
pub mod portfolio;
pub mod posterior;
pub mod shrinkage;
pub mod validate;

pub use error::{Error, ErrorKind, Result};
