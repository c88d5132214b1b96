#ifndef BOUNDER_H
#define BOUNDER_H

/* Generated by cbindgen from bounder-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Length of the raw observation vector.
 */
#define BOUNDER_RAW_OBSERVATION_LEN 34

/**
 * Length of the feature-engineered observation vector.
 */
#define BOUNDER_ENGINEERED_OBSERVATION_LEN 30

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  BOUNDER_STATUS_OK = 0,
  BOUNDER_STATUS_NULL_ARGUMENT = 1,
  BOUNDER_STATUS_INVALID_UTF8 = 2,
  BOUNDER_STATUS_IO_ERROR = 3,
  BOUNDER_STATUS_PARSE_ERROR = 4,
  BOUNDER_STATUS_DIMENSION_MISMATCH = 5,
  BOUNDER_STATUS_INTERNAL_ERROR = 6,
} BounderStatus;

/**
 * Opaque handle to a loaded policy network.
 */
typedef struct BounderPolicy BounderPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load actor weights from a CSV file. On success writes a handle to
 * `out`; the caller owns it and must release it with
 * [`bounder_policy_free`].
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid
 * pointer.
 */
BounderStatus bounder_policy_load(const char *path, BounderPolicy **out);

/**
 * Release a handle returned by [`bounder_policy_load`]. Null is a no-op.
 *
 * # Safety
 * `policy` must be null or a pointer previously returned by
 * [`bounder_policy_load`] that has not been freed.
 */
void bounder_policy_free(BounderPolicy *policy);

/**
 * Input width of the loaded network.
 *
 * # Safety
 * `policy` and `out` must be valid pointers.
 */
BounderStatus bounder_policy_input_len(const BounderPolicy *policy, size_t *out);

/**
 * Output width of the loaded network (12 joint position targets).
 *
 * # Safety
 * `policy` and `out` must be valid pointers.
 */
BounderStatus bounder_policy_output_len(const BounderPolicy *policy, size_t *out);

/**
 * Run one forward pass: `input` holds `input_len` observation values,
 * `output` receives `output_len` joint position targets. Lengths must
 * match the network exactly.
 *
 * # Safety
 * `policy`, `input` and `output` must be valid for the given lengths.
 */
BounderStatus bounder_policy_infer(const BounderPolicy *policy,
                                   const double *input,
                                   size_t input_len,
                                   double *output,
                                   size_t output_len);

/**
 * Apply the front-minus-hind feature engineering to a raw 34-value
 * observation, producing the 30-value engineered form.
 *
 * # Safety
 * `raw` and `out` must be valid for the given lengths.
 */
BounderStatus bounder_feature_engineer(const double *raw,
                                       size_t raw_len,
                                       double *out,
                                       size_t out_len);

/**
 * Static name of a status code (never null).
 */
const char *bounder_status_name(BounderStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOUNDER_H */
