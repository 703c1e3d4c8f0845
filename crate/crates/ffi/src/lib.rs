//! C ABI over `riskattrib`.
//!
//! Every fallible function returns an [`RaStatus`]; on failure the message
//! is available from [`ra_last_error_message`] on the same thread until the
//! next failing call. Matrices are p×p row-major, return panels n×p
//! row-major (one row per observation). Handles are opaque and must be
//! released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use riskattrib::attribution::{prob_positive_cctr, run_mc, with_thread_pool, AttributionSamples, PortfolioWeights};
use riskattrib::matstat::{scatter_matrix, SymMatrix};
use riskattrib::posterior::{posterior_from_scatter, PosteriorParams, PriorSpec, TargetKind};
use riskattrib::shrinkage::{estimate, Estimator};
use riskattrib::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaStatus {
    Ok = 0,
    /// Malformed arguments or data.
    Input = 1,
    /// Well-formed inputs on which the numerics failed.
    Numerical = 2,
    /// A required pointer argument was null.
    NullPointer = 3,
    /// Internal panic caught at the boundary.
    Panic = 4,
}

pub const RA_ESTIMATOR_SAMPLE: u32 = 0;
pub const RA_ESTIMATOR_ADHOC: u32 = 1;
pub const RA_ESTIMATOR_BLW: u32 = 2;
pub const RA_ESTIMATOR_DHD: u32 = 3;
pub const RA_ESTIMATOR_LW13: u32 = 4;

pub const RA_TARGET_DIAG: u32 = 0;
pub const RA_TARGET_IDENTITY: u32 = 1;

/// Prior configuration. `n0 <= 0` derives n₀ from n, p and `c`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RaPrior {
    pub c: f64,
    pub target: u32,
    pub n0: f64,
}

/// Inverse-Wishart posterior for the covariance.
pub struct RaPosterior(PosteriorParams);

/// Monte Carlo attribution draws.
pub struct RaSamples(AttributionSamples);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Core(Error),
    Input(String),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult = Result<(), Failure>;

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> FfiResult) -> RaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RaStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Input => RaStatus::Input,
                ErrorKind::Numerical => RaStatus::Numerical,
            }
        }
        Ok(Err(Failure::Input(m))) => {
            set_error(m);
            RaStatus::Input
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            RaStatus::NullPointer
        }
        Err(panic) => {
            let m = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {m}"));
            RaStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, name: &'static str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, name: &'static str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or(Failure::Null(name))
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Failure::Input(format!("size {a} x {b} overflows")))
}

fn prior_spec(prior: &RaPrior) -> Result<PriorSpec, Failure> {
    let target_kind = match prior.target {
        RA_TARGET_DIAG => TargetKind::SampleVarianceDiag,
        RA_TARGET_IDENTITY => TargetKind::IdentityScaled,
        t => return Err(Failure::Input(format!("unknown prior target {t}"))),
    };
    Ok(PriorSpec {
        c: prior.c,
        target_kind,
        n0_override: (prior.n0 > 0.0).then_some(prior.n0),
    })
}

fn estimator(code: u32) -> Result<Estimator, Failure> {
    Ok(match code {
        RA_ESTIMATOR_SAMPLE => Estimator::Sample,
        RA_ESTIMATOR_ADHOC => Estimator::Adhoc,
        RA_ESTIMATOR_BLW => Estimator::Blw,
        RA_ESTIMATOR_DHD => Estimator::Dhd,
        RA_ESTIMATOR_LW13 => Estimator::Lw13,
        e => return Err(Failure::Input(format!("unknown estimator {e}"))),
    })
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ra_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default prior: c = 1.5, sample-variance diagonal target, derived n₀.
#[no_mangle]
pub extern "C" fn ra_prior_default() -> RaPrior {
    let d = PriorSpec::default();
    RaPrior {
        c: d.c,
        target: RA_TARGET_DIAG,
        n0: 0.0,
    }
}

/// Covariance estimate from an n×p return panel into `out_matrix` (p×p).
/// `out_weight`, if non-null, receives the weight on the shrinkage target.
#[no_mangle]
pub unsafe extern "C" fn ra_estimate(
    returns: *const f64,
    n: usize,
    p: usize,
    estimator_code: u32,
    prior: *const RaPrior,
    out_matrix: *mut f64,
    out_weight: *mut f64,
) -> RaStatus {
    guard(|| {
        let values = input(returns, checked_len(n, p)?, "returns")?;
        let prior = prior_spec(handle(prior, "prior")?)?;
        let out = output(out_matrix, checked_len(p, p)?, "out_matrix")?;
        let s = scatter_matrix(values, n, p)?;
        let est = estimate(estimator(estimator_code)?, &s, n, &prior)?;
        out.copy_from_slice(est.matrix.as_slice());
        if let Some(w) = out_weight.as_mut() {
            *w = est.weight_on_target;
        }
        Ok(())
    })
}

/// Posterior W⁻¹(n₀ + n − 1, Ψ + S) from an n×p return panel.
#[no_mangle]
pub unsafe extern "C" fn ra_posterior_new(
    returns: *const f64,
    n: usize,
    p: usize,
    prior: *const RaPrior,
    out: *mut *mut RaPosterior,
) -> RaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let values = input(returns, checked_len(n, p)?, "returns")?;
        let prior = prior_spec(handle(prior, "prior")?)?;
        let s = scatter_matrix(values, n, p)?;
        let post = posterior_from_scatter(&s, n, &prior)?;
        *out = Box::into_raw(Box::new(RaPosterior(post)));
        Ok(())
    })
}

/// Posterior W⁻¹(nu, scale) with an explicit p×p scale matrix.
#[no_mangle]
pub unsafe extern "C" fn ra_posterior_from_parts(
    nu: f64,
    scale: *const f64,
    p: usize,
    out: *mut *mut RaPosterior,
) -> RaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let m = SymMatrix::from_row_major(p, input(scale, checked_len(p, p)?, "scale")?.to_vec())?;
        *out = Box::into_raw(Box::new(RaPosterior(PosteriorParams::from_parts(nu, m)?)));
        Ok(())
    })
}

/// Dimension p, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ra_posterior_dim(post: *const RaPosterior) -> usize {
    post.as_ref().map_or(0, |h| h.0.dim())
}

/// Posterior degrees of freedom, or NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ra_posterior_nu(post: *const RaPosterior) -> f64 {
    post.as_ref().map_or(f64::NAN, |h| h.0.nu())
}

/// Posterior mode into `out_matrix` (p×p).
#[no_mangle]
pub unsafe extern "C" fn ra_posterior_mode(post: *const RaPosterior, out_matrix: *mut f64) -> RaStatus {
    guard(|| {
        let post = &handle(post, "posterior")?.0;
        let p = post.dim();
        output(out_matrix, p * p, "out_matrix")?.copy_from_slice(post.mode().as_slice());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ra_posterior_free(post: *mut RaPosterior) {
    if !post.is_null() {
        drop(Box::from_raw(post));
    }
}

/// Draws `n_sims` posterior replications of total volatility, MCTR and
/// CCTR for simplex weights of length p. `threads` = 0 uses the global
/// pool. Results do not depend on the thread count.
#[no_mangle]
pub unsafe extern "C" fn ra_run_mc(
    post: *const RaPosterior,
    weights: *const f64,
    p: usize,
    n_sims: usize,
    seed: u64,
    threads: usize,
    out: *mut *mut RaSamples,
) -> RaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let post = &handle(post, "posterior")?.0;
        let w = PortfolioWeights::new(input(weights, p, "weights")?.to_vec())?;
        let samples = if threads == 0 {
            run_mc(post, &w, n_sims, seed)?
        } else {
            with_thread_pool(threads, || run_mc(post, &w, n_sims, seed))??
        };
        *out = Box::into_raw(Box::new(RaSamples(samples)));
        Ok(())
    })
}

/// Number of replications N, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ra_samples_count(samples: *const RaSamples) -> usize {
    samples.as_ref().map_or(0, |h| h.0.n_sims())
}

/// Number of sources p, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ra_samples_dim(samples: *const RaSamples) -> usize {
    samples.as_ref().map_or(0, |h| h.0.dim())
}

/// Total volatility draws, length N. Borrowed from the handle.
#[no_mangle]
pub unsafe extern "C" fn ra_samples_volatility(samples: *const RaSamples) -> *const f64 {
    samples.as_ref().map_or(ptr::null(), |h| h.0.sigma_p().as_ptr())
}

/// MCTR draws, N×p row-major. Borrowed from the handle.
#[no_mangle]
pub unsafe extern "C" fn ra_samples_mctr(samples: *const RaSamples) -> *const f64 {
    samples.as_ref().map_or(ptr::null(), |h| h.0.mctr().as_ptr())
}

/// CCTR draws, N×p row-major. Borrowed from the handle.
#[no_mangle]
pub unsafe extern "C" fn ra_samples_cctr(samples: *const RaSamples) -> *const f64 {
    samples.as_ref().map_or(ptr::null(), |h| h.0.cctr().as_ptr())
}

/// P(ζ_j > 0) per source into `out` (length p).
#[no_mangle]
pub unsafe extern "C" fn ra_samples_prob_positive(samples: *const RaSamples, out: *mut f64) -> RaStatus {
    guard(|| {
        let s = &handle(samples, "samples")?.0;
        output(out, s.dim(), "out")?.copy_from_slice(&prob_positive_cctr(s));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ra_samples_free(samples: *mut RaSamples) {
    if !samples.is_null() {
        drop(Box::from_raw(samples));
    }
}
