#ifndef SINGSTAB_H
#define SINGSTAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SingstabStatus {
  SINGSTAB_STATUS_OK = 0,
  SINGSTAB_STATUS_NULL_POINTER = 1,
  SINGSTAB_STATUS_INVALID_UTF8 = 2,
  SINGSTAB_STATUS_SCHEMA = 3,
  SINGSTAB_STATUS_DIMENSION = 4,
  SINGSTAB_STATUS_SINGULAR = 5,
  SINGSTAB_STATUS_NON_FINITE = 6,
  SINGSTAB_STATUS_PRECONDITION = 7,
  SINGSTAB_STATUS_CONVERGENCE = 8,
  SINGSTAB_STATUS_INVALID_ARGUMENT = 9,
  SINGSTAB_STATUS_SIGNAL = 10,
  SINGSTAB_STATUS_NUMERIC = 11,
  SINGSTAB_STATUS_PANIC = 12,
} SingstabStatus;

typedef enum SingstabTarget {
  SINGSTAB_TARGET_SIGMA_EPS = 0,
  SINGSTAB_TARGET_SIGMA_BAR = 1,
  SINGSTAB_TARGET_SIGMA_HAT = 2,
  SINGSTAB_TARGET_SIGMA_TILDE = 3,
} SingstabTarget;

/**
 * Opaque handle to a validated family.
 */
typedef struct SingstabFamily SingstabFamily;

typedef struct SingstabEstimateOptions {
  double eps;
  double mu;
  size_t depth;
  uint64_t budget;
  bool forbid_self_switch;
} SingstabEstimateOptions;

typedef struct SingstabBounds {
  double certified_lower;
  double heuristic_upper;
  double abscissa_floor;
  /**
   * True when the upper bound holds for every word over the sampled grid.
   */
  bool upper_grid_certified;
  size_t depth_reached;
} SingstabBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *singstab_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *singstab_version(void);

/**
 * Parses and validates a system document; `*out` receives a new handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SingstabStatus singstab_family_from_json(const char *json, struct SingstabFamily **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `family` must come from [`singstab_family_from_json`] and not be used afterwards.
 */
void singstab_family_free(struct SingstabFamily *family);

/**
 * State dimension and number of modes.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SingstabStatus singstab_family_shape(const struct SingstabFamily *family,
                                          size_t *dim,
                                          size_t *modes);

/**
 * Whether every fast block is Hurwitz. When `abscissas` is non-null it
 * receives one spectral abscissa per mode and must hold `len` entries.
 *
 * # Safety
 * `pass` must be valid; `abscissas`, if non-null, must hold `len` doubles.
 */
enum SingstabStatus singstab_d_hurwitz(const struct SingstabFamily *family,
                                       bool *pass,
                                       double *abscissas,
                                       size_t len);

/**
 * Defaults matching the command-line tool.
 */
struct SingstabEstimateOptions singstab_estimate_options_default(void);

/**
 * Exponent bounds for one target system. Infinite bounds are reported as
 * IEEE infinities.
 *
 * # Safety
 * `opts` and `out` must be valid pointers.
 */
enum SingstabStatus singstab_lambda_estimate(const struct SingstabFamily *family,
                                             enum SingstabTarget target,
                                             const struct SingstabEstimateOptions *opts,
                                             struct SingstabBounds *out);

/**
 * Simulates along a signal given as JSON and returns the trajectory as CSV
 * (`t,x1..xd,mode`) in `*csv`, to be released with [`singstab_string_free`].
 *
 * # Safety
 * `signal_json` must be NUL-terminated, `x0` must hold `dim` doubles and
 * `csv` must be a valid pointer.
 */
enum SingstabStatus singstab_simulate_csv(const struct SingstabFamily *family,
                                          enum SingstabTarget target,
                                          const char *signal_json,
                                          const double *x0,
                                          size_t dim,
                                          double t_end,
                                          double dt_out,
                                          double eps,
                                          char **csv);

/**
 * Releases a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void singstab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SINGSTAB_H */
