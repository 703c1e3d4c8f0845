/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef RISKATTRIB_H
#define RISKATTRIB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RA_ESTIMATOR_SAMPLE 0

#define RA_ESTIMATOR_ADHOC 1

#define RA_ESTIMATOR_BLW 2

#define RA_ESTIMATOR_DHD 3

#define RA_ESTIMATOR_LW13 4

#define RA_TARGET_DIAG 0

#define RA_TARGET_IDENTITY 1

typedef enum {
  RA_STATUS_OK = 0,
  // Malformed arguments or data.
  RA_STATUS_INPUT = 1,
  // Well-formed inputs on which the numerics failed.
  RA_STATUS_NUMERICAL = 2,
  // A required pointer argument was null.
  RA_STATUS_NULL_POINTER = 3,
  // Internal panic caught at the boundary.
  RA_STATUS_PANIC = 4,
} RaStatus;

// Inverse-Wishart posterior for the covariance.
typedef struct RaPosterior RaPosterior;

// Monte Carlo attribution draws.
typedef struct RaSamples RaSamples;

// Prior configuration. `n0 <= 0` derives n₀ from n, p and `c`.
typedef struct {
  double c;
  uint32_t target;
  double n0;
} RaPrior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *ra_last_error_message(void);

// Library version as a static nul-terminated string.
const char *ra_version(void);

// Default prior: c = 1.5, sample-variance diagonal target, derived n₀.
RaPrior ra_prior_default(void);

// Covariance estimate from an n×p return panel into `out_matrix` (p×p).
// `out_weight`, if non-null, receives the weight on the shrinkage target.
RaStatus ra_estimate(const double *returns,
                     size_t n,
                     size_t p,
                     uint32_t estimator_code,
                     const RaPrior *prior,
                     double *out_matrix,
                     double *out_weight);

// Posterior W⁻¹(n₀ + n − 1, Ψ + S) from an n×p return panel.
RaStatus ra_posterior_new(const double *returns,
                          size_t n,
                          size_t p,
                          const RaPrior *prior,
                          RaPosterior **out);

// Posterior W⁻¹(nu, scale) with an explicit p×p scale matrix.
RaStatus ra_posterior_from_parts(double nu, const double *scale, size_t p, RaPosterior **out);

// Dimension p, or 0 for a null handle.
size_t ra_posterior_dim(const RaPosterior *post);

// Posterior degrees of freedom, or NaN for a null handle.
double ra_posterior_nu(const RaPosterior *post);

// Posterior mode into `out_matrix` (p×p).
RaStatus ra_posterior_mode(const RaPosterior *post, double *out_matrix);

void ra_posterior_free(RaPosterior *post);

// Draws `n_sims` posterior replications of total volatility, MCTR and
// CCTR for simplex weights of length p. `threads` = 0 uses the global
// pool. Results do not depend on the thread count.
RaStatus ra_run_mc(const RaPosterior *post,
                   const double *weights,
                   size_t p,
                   size_t n_sims,
                   uint64_t seed,
                   size_t threads,
                   RaSamples **out);

// Number of replications N, or 0 for a null handle.
size_t ra_samples_count(const RaSamples *samples);

// Number of sources p, or 0 for a null handle.
size_t ra_samples_dim(const RaSamples *samples);

// Total volatility draws, length N. Borrowed from the handle.
const double *ra_samples_volatility(const RaSamples *samples);

// MCTR draws, N×p row-major. Borrowed from the handle.
const double *ra_samples_mctr(const RaSamples *samples);

// CCTR draws, N×p row-major. Borrowed from the handle.
const double *ra_samples_cctr(const RaSamples *samples);

// P(ζ_j > 0) per source into `out` (length p).
RaStatus ra_samples_prob_positive(const RaSamples *samples, double *out);

void ra_samples_free(RaSamples *samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKATTRIB_H */
