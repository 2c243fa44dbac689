#ifndef NETSLICE_H
#define NETSLICE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_POINTER = 1,
  NS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Wrong observation length or slice count.
   */
  NS_STATUS_DIMENSION = 3,
  NS_STATUS_NON_FINITE = 4,
  NS_STATUS_IO = 5,
  NS_STATUS_PARSE = 6,
  NS_STATUS_UNSUPPORTED_VERSION = 7,
  NS_STATUS_INFEASIBLE = 8,
  /**
   * The grid oracle would enumerate too many points.
   */
  NS_STATUS_GRID_BUDGET = 9,
  NS_STATUS_SOLVER = 10,
  /**
   * A Rust panic was caught at the boundary.
   */
  NS_STATUS_PANIC = 11,
  NS_STATUS_INTERNAL = 12,
} NsStatus;

/**
 * Opaque trained estimator.
 */
typedef struct NsEstimator NsEstimator;

/**
 * Mirror of the optimizer parameters; start from
 * [`ns_solver_params_default`].
 */
typedef struct NsSolverParams {
  size_t starts;
  double noise_mean;
  double noise_variance;
  double step_x;
  double step_lambda;
  double decay;
  size_t max_iterations;
  double tolerance;
  double initial_lambda;
  uint64_t seed;
  bool fill_slack;
} NsSolverParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ns_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful one. Valid until the next call into the library.
 */
const char *ns_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *ns_status_name(enum NsStatus status);

/**
 * Loads a model JSON file written by the `train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NsStatus ns_estimator_load(const char *path, struct NsEstimator **out);

/**
 * Parses a model from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum NsStatus ns_estimator_from_json(const char *json, struct NsEstimator **out);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `handle` must come from this library and not be used afterwards.
 */
void ns_estimator_free(struct NsEstimator *handle);

/**
 * History length `H`; observation rows hold `2H + 2` values.
 *
 * # Safety
 * `handle` must be live and `out` writable.
 */
enum NsStatus ns_estimator_history_len(const struct NsEstimator *handle, size_t *out);

/**
 * Predicted satisfaction `f(x, z)` in [0, 1].
 *
 * # Safety
 * `handle` must be live, `z` must hold `z_len` values and `out` be writable.
 */
enum NsStatus ns_estimator_forward(const struct NsEstimator *handle,
                                   double x,
                                   const double *z,
                                   size_t z_len,
                                   double *out);

/**
 * Analytic `∂f/∂x`.
 *
 * # Safety
 * As for [`ns_estimator_forward`].
 */
enum NsStatus ns_estimator_gradient(const struct NsEstimator *handle,
                                    double x,
                                    const double *z,
                                    size_t z_len,
                                    double *out);

struct NsSolverParams ns_solver_params_default(void);

/**
 * Splits one cell across `num_slices` slices. `x_init` may be NULL for
 * the equal split and `params` NULL for the defaults. Writes `num_slices`
 * shares to `out_shares`; `out_utility` may be NULL.
 *
 * # Safety
 * `observations` must hold `num_slices * row_len` values, `x_init` (if
 * non-NULL) and `out_shares` `num_slices` each.
 */
enum NsStatus ns_solve_cell(const struct NsEstimator *handle,
                            const double *observations_ptr,
                            size_t num_slices,
                            size_t row_len,
                            const double *x_init,
                            const struct NsSolverParams *params,
                            double *out_shares,
                            double *out_utility);

/**
 * Exhaustive search over the simplex grid with spacing `grid_step`.
 *
 * # Safety
 * As for [`ns_solve_cell`].
 */
enum NsStatus ns_oracle_grid(const struct NsEstimator *handle,
                             const double *observations_ptr,
                             size_t num_slices,
                             size_t row_len,
                             double grid_step,
                             double *out_shares,
                             double *out_utility);

/**
 * `min(throughput / throughput_req, delay_req / delay, 1)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum NsStatus ns_satisfaction(double throughput,
                              double throughput_req,
                              double delay,
                              double delay_req,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETSLICE_H */
