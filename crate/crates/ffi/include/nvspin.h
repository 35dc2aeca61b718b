#ifndef NVSPIN_H
#define NVSPIN_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum NvBranch {
  // m_s = 0 -> +1
  NV_BRANCH_PLUS = 0,
  // m_s = 0 -> -1
  NV_BRANCH_MINUS = 1,
} NvBranch;

typedef enum NvStatus {
  NV_STATUS_OK = 0,
  NV_STATUS_NULL_POINTER = 1,
  NV_STATUS_INVALID_ARGUMENT = 2,
  // Eigensolver failure, ambiguous level labels, singular fit.
  NV_STATUS_NUMERICAL = 3,
  NV_STATUS_NOT_CONVERGED = 4,
  NV_STATUS_PANIC = 5,
} NvStatus;

// Opaque fit result handle.
typedef struct NvFit NvFit;

// Opaque trace handle.
typedef struct NvTrace NvTrace;

// Mirrors the Rust `SpinSystemParams`. Frequencies in MHz, field in G.
typedef struct NvSpinParams {
  double d;
  double gamma_e;
  double b_mag;
  double b_theta;
  double a_par;
  double a_perp;
  double p_quad;
} NvSpinParams;

typedef struct NvLevel {
  double energy;
  int8_t m_s;
  int8_t m_i;
  double overlap;
} NvLevel;

typedef struct NvTriplet {
  // Transition frequencies for m_I = -1, 0, +1, MHz.
  double by_projection[3];
  double center;
  // Mean adjacent spacing, MHz.
  double splitting;
} NvTriplet;

typedef struct NvDriveParams {
  double f0;
  double delta_f;
  double alpha_n;
  double phase;
} NvDriveParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into the library from this thread.
const char *nv_last_error(void);

// Library version as a static NUL-terminated string.
const char *nv_version(void);

struct NvSpinParams nv_spin_params_default(void);

// Copies `params` with the field angle set so the 0 -> +1 and 0 -> -1
// branch centers are `target` MHz apart.
//
// # Safety
// `params` and `out` must be valid pointers.
enum NvStatus nv_spin_match_branch_splitting(const struct NvSpinParams *params,
                                             double target,
                                             struct NvSpinParams *out);

// Writes the nine eigenlevels, ascending, to `out[0..9]`.
//
// # Safety
// `params` must be valid; `out` must have room for nine entries.
enum NvStatus nv_levels(const struct NvSpinParams *params, struct NvLevel *out);

// # Safety
// `params` and `out` must be valid pointers.
enum NvStatus nv_transition_triplet(const struct NvSpinParams *params,
                                    enum NvBranch branch,
                                    struct NvTriplet *out);

double nv_effective_rabi(double f0, double delta_f);

// Projection-averaged m_s = 0 population after a Rabi pulse of length `t`
// μs. Pass `INFINITY` for `t0` to disable damping. NaN on a null pointer.
//
// # Safety
// `drive` must be valid or null.
double nv_rabi_average_population(double t, const struct NvDriveParams *drive, double t0);

double nv_ramsey_signal(double t, double delta_f, double alpha_n, double t2_star);

double nv_echo_signal(double tau,
                      double tau_prime,
                      double delta_f,
                      double alpha_n,
                      double tau_c,
                      double echo_exponent);

// Simulates the experiment described by a JSON recipe string. `seed < 0`
// gives the noiseless trace; otherwise shot noise is drawn with `seed`.
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be valid.
enum NvStatus nv_simulate_json(const char *config_json, int64_t seed, struct NvTrace **out);

// As [`nv_simulate_json`], reading the recipe from a file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum NvStatus nv_simulate_file(const char *path, int64_t seed, struct NvTrace **out);

// Builds a trace from caller arrays. `sigma` may be null for exact data.
//
// # Safety
// `x` and `y` (and `sigma` if non-null) must hold `n` values.
enum NvStatus nv_trace_new(const double *x,
                           const double *y,
                           const double *sigma,
                           size_t n,
                           struct NvTrace **out);

// Number of points; 0 for a null handle.
//
// # Safety
// `trace` must be a live handle or null.
size_t nv_trace_len(const struct NvTrace *trace);

// Copies up to `capacity` points. Any output pointer may be null.
//
// # Safety
// `trace` must be live; non-null outputs must hold `capacity` values.
enum NvStatus nv_trace_copy(const struct NvTrace *trace,
                            double *x,
                            double *y,
                            double *sigma,
                            size_t capacity);

// # Safety
// `trace` must come from this library and not be used afterwards.
void nv_trace_free(struct NvTrace *trace);

// Fits `model` (`triple_nutation`, `triple_lorentzian`, `ramsey_fringes`,
// `echo_envelope`) starting from `init[0..n_init]`. With `init` null the
// start is estimated from the data (for nutation, several detunings are
// tried). Non-convergence still returns a handle, with status
// `NotConverged`.
//
// # Safety
// `trace` must be live; `model` NUL-terminated; `init` null or holding
// `n_init` values; `out` valid.
enum NvStatus nv_fit(const struct NvTrace *trace,
                     const char *model,
                     const double *init,
                     size_t n_init,
                     struct NvFit **out);

// Data-derived starting point for `model`, written to `out[0..capacity]`.
// Returns the parameter count through `n_params`.
//
// # Safety
// `trace` live, `model` NUL-terminated, `out` holding `capacity` values,
// `n_params` valid.
enum NvStatus nv_init_guess(const struct NvTrace *trace,
                            const char *model,
                            double *out,
                            size_t capacity,
                            size_t *n_params);

// # Safety
// `fit` must be a live handle or null.
size_t nv_fit_n_params(const struct NvFit *fit);

// Parameter name as a static NUL-terminated string, or null when out of
// range.
//
// # Safety
// `fit` must be a live handle or null.
const char *nv_fit_param_name(const struct NvFit *fit, size_t index);

// Value and standard error of parameter `index`. The error is `INFINITY`
// for parameters the data leave unconstrained and 0 for fixed ones.
//
// # Safety
// `fit` must be live; `value` and `stderr` valid or null.
enum NvStatus nv_fit_param(const struct NvFit *fit, size_t index, double *value, double *stderr);

// Residual sum of squares (weighted when the trace carries sigma); NaN for
// a null handle.
//
// # Safety
// `fit` must be a live handle or null.
double nv_fit_sse(const struct NvFit *fit);

// # Safety
// `fit` must be a live handle or null.
bool nv_fit_converged(const struct NvFit *fit);

// # Safety
// `fit` must be a live handle or null.
size_t nv_fit_iterations(const struct NvFit *fit);

// # Safety
// `fit` must come from this library and not be used afterwards.
void nv_fit_free(struct NvFit *fit);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* NVSPIN_H */
