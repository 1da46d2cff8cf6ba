#ifndef PERLYAP_H
#define PERLYAP_H

/* Generated by cbindgen from the perlyap-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Which stability statement produced a bound.
typedef enum PerlyapRegime {
  PerlyapRegime_Theorem1 = 0,
  PerlyapRegime_Remark1 = 1,
  PerlyapRegime_Theorem2 = 2,
  PerlyapRegime_Remark2 = 3,
} PerlyapRegime;

// Status codes returned by every API call.
typedef enum PerlyapStatus {
  PerlyapStatus_Ok = 0,
  // Invalid configuration or arguments.
  PerlyapStatus_ConfigError = 1,
  // Arguments outside an operation's domain.
  PerlyapStatus_DomainError = 2,
  // No representable admissible region exists.
  PerlyapStatus_Infeasible = 3,
  // A required pointer was null.
  PerlyapStatus_NullPointer = 4,
  // An internal panic was caught.
  PerlyapStatus_Panic = 5,
} PerlyapStatus;

// Opaque Lyapunov-certificate handle.
typedef struct PerlyapCertificate PerlyapCertificate;

// Opaque noise-model handle.
typedef struct PerlyapNoise PerlyapNoise;

// Opaque drift-field handle.
typedef struct PerlyapSystem PerlyapSystem;

// Drift callback: write `f(x, t)` (dim entries) into `out`.
//
// The callback is invoked concurrently from worker threads and must be
// thread-safe; `ctx` is passed through untouched.
typedef void (*PerlyapDriftFn)(const double *x, size_t dim, double t, double *out, void *ctx);

// Summary of a certificate verification run.
typedef struct PerlyapCertSummary {
  bool passed;
  // Minimal slack of the two-sided quadratic sandwich.
  double sandwich_margin;
  double gradient_margin;
  double hessian_margin;
  double decay_margin;
  size_t sampled_points;
  size_t violations;
} PerlyapCertSummary;

// A theoretical exit-probability bound. Optional fields (`kappa`, `nu`,
// `delta`, `delta_cap`) are NaN when absent; `horizon` is +infinity for
// the uniform-in-time regime.
typedef struct PerlyapBound {
  double mu;
  uint32_t order;
  double kappa;
  double epsilon;
  double nu;
  double y0_norm;
  double horizon;
  double v_initial;
  double bound;
  double delta;
  double delta_cap;
  enum PerlyapRegime regime;
} PerlyapBound;

// Integration controls for Monte Carlo runs.
typedef struct PerlyapSimConfig {
  // Step size; pass 0 for the default `min(1e-2, eps^2/(100 mu^2))`.
  double dt;
  bool bridge_correction;
  uint64_t max_steps;
  uint64_t seed;
} PerlyapSimConfig;

// Exit-probability estimate with a Wilson interval.
typedef struct PerlyapEstimate {
  uint64_t n_trajectories;
  uint64_t n_exited;
  uint64_t aborted;
  double p_hat;
  double ci_low;
  double ci_high;
  double level;
  bool unreliable;
} PerlyapEstimate;

// Truncated series evaluation.
typedef struct PerlyapSeries {
  double value;
  uint32_t terms_used;
  double truncation_error_estimate;
} PerlyapSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message on this thread into `buf` (truncated to
// `cap - 1` bytes, always NUL-terminated when `cap > 0`) and returns the
// full message length in bytes.
//
// # Safety
// `buf` must point to `cap` writable bytes, or be null (then only the
// length is returned).
size_t perlyap_last_error_message(char *buf, size_t cap);

// Frees a system handle (null is a no-op).
//
// # Safety
// `p` must have been returned by a `perlyap_system_*` constructor and not
// freed before.
void perlyap_system_free(struct PerlyapSystem *p);

// Frees a noise handle (null is a no-op).
//
// # Safety
// `p` must have been returned by a `perlyap_noise_*` constructor and not
// freed before.
void perlyap_noise_free(struct PerlyapNoise *p);

// Frees a certificate handle (null is a no-op).
//
// # Safety
// `p` must have been returned by a certificate constructor and not freed
// before.
void perlyap_certificate_free(struct PerlyapCertificate *p);

// Zero drift in one dimension (the pure-noise system).
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_system_pure_noise(struct PerlyapSystem **out);

// The bistable cubic drift `-y (1 - y^2) / (1 + y^2)`.
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_system_cubic_bistable(struct PerlyapSystem **out);

// Linear mean reversion `-theta y`.
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_system_linear_ou(double theta, struct PerlyapSystem **out);

// Builds a system from a C drift callback. The drift must vanish at the
// origin (checked numerically on a time grid).
//
// # Safety
// `drift` must be callable from any thread with the documented signature
// for the lifetime of the handle, and `ctx` must stay valid that long.
enum PerlyapStatus perlyap_system_custom(size_t dim,
                                         PerlyapDriftFn drift,
                                         void *ctx,
                                         double lipschitz,
                                         double growth,
                                         struct PerlyapSystem **out);

// Constant scalar noise `G = scale` (diffusion bound `scale^2 / 2`).
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_noise_scalar(double scale, struct PerlyapNoise **out);

// Exponentially damped scalar noise `G = scale e^(-rate t / 2)` with its
// integrable envelope.
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_noise_damped_exp(double rate, double scale, struct PerlyapNoise **out);

// One-dimensional quadratic certificate `V = x^2` with explicit constants.
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_certificate_quadratic(double quad_upper,
                                                 double grad_bound,
                                                 double hess_bound,
                                                 double decay_rate,
                                                 double radius,
                                                 struct PerlyapCertificate **out);

// Verifies the certificate inequalities on the default sampled ball.
//
// # Safety
// All pointers must be valid handles / writable memory.
enum PerlyapStatus perlyap_verify_certificate(const struct PerlyapCertificate *cert,
                                              const struct PerlyapSystem *system,
                                              struct PerlyapCertSummary *out);

// Largest sampled max-entry norm of the diffusion matrix over the ball of
// the given radius.
//
// # Safety
// `noise` must be a valid handle; `out` writable.
enum PerlyapStatus perlyap_estimate_h(const struct PerlyapNoise *noise, double radius, double *out);

// Finite-horizon bound on `T = mu^(-2N+kappa)` for bounded noise
// (requires a certificate with positive decay rate).
//
// # Safety
// `cert` must be a valid handle; `y0` must hold `dim` doubles; `out`
// writable.
enum PerlyapStatus perlyap_theorem1_bound(const struct PerlyapCertificate *cert,
                                          double noise_bound,
                                          double mu,
                                          uint32_t order,
                                          double kappa,
                                          double epsilon,
                                          double nu,
                                          const double *y0,
                                          size_t dim,
                                          struct PerlyapBound *out);

// Uniform-in-time bound for damped noise (`gamma = 0` certificates).
//
// # Safety
// Handles must be valid; `y0` must hold `dim` doubles; `out` writable.
enum PerlyapStatus perlyap_theorem2_bound(const struct PerlyapCertificate *cert,
                                          const struct PerlyapNoise *noise,
                                          double mu,
                                          double epsilon,
                                          const double *y0,
                                          size_t dim,
                                          struct PerlyapBound *out);

// Admissible initial radius `delta` and intensity threshold `Delta` for
// the finite-horizon guarantee.
//
// # Safety
// `cert` must be a valid handle; `delta`/`delta_cap` writable.
enum PerlyapStatus perlyap_admissible_region(const struct PerlyapCertificate *cert,
                                             double noise_bound,
                                             uint32_t order,
                                             double epsilon,
                                             double nu,
                                             double kappa,
                                             double *delta,
                                             double *delta_cap);

// Estimates `P(sup_{[0,T]} |y| >= epsilon)` over `n_trajectories` stopped
// trajectories.
//
// # Safety
// Handles must be valid; `y0` must hold `dim` doubles; `config` and `out`
// must be valid pointers.
enum PerlyapStatus perlyap_estimate_exit_probability(const struct PerlyapSystem *system,
                                                     const struct PerlyapNoise *noise,
                                                     double mu,
                                                     const double *y0,
                                                     size_t dim,
                                                     double epsilon,
                                                     double horizon,
                                                     uint64_t n_trajectories,
                                                     double ci_level,
                                                     const struct PerlyapSimConfig *config,
                                                     struct PerlyapEstimate *out);

// Two-sided Wiener supremum distribution `P(sup |w| >= c)` on `[0, T]`.
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_brownian_sup_prob(double c,
                                             double t,
                                             double tol,
                                             struct PerlyapSeries *out);

// Intensity threshold for the pure-noise system (see the CLI docs).
//
// # Safety
// `out` must be a valid pointer.
enum PerlyapStatus perlyap_example1_threshold(double epsilon, double nu, double kappa, double *out);

// Mean and variance of the linear mean-reverting process at time `t`.
//
// # Safety
// `mean` and `variance` must be valid pointers.
enum PerlyapStatus perlyap_ou_moments(double theta,
                                      double mu,
                                      double t,
                                      double y0,
                                      double *mean,
                                      double *variance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERLYAP_H */
