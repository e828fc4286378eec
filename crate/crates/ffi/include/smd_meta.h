#ifndef SMD_META_H
#define SMD_META_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SMD_OK 0

#define SMD_ERR_NULL 1

#define SMD_ERR_ARGUMENT 2

#define SMD_ERR_INVARIANT 3

#define SMD_ERR_NUMERICAL 4

#define SMD_ERR_PANIC 5

#define SMD_TAU2_DL 0

#define SMD_TAU2_REML 1

#define SMD_TAU2_MP 2

#define SMD_TAU2_J 3

#define SMD_TAU2_KDB 4

#define SMD_TAU2_CI_QP 0

#define SMD_TAU2_CI_BJ 1

#define SMD_TAU2_CI_J 2

#define SMD_TAU2_CI_PL 3

#define SMD_TAU2_CI_KDB 4

// Effect weightings 0..4 are inverse-variance with the matching SMD_TAU2_*
// estimator; 5 is effective-sample-size weighting.
#define SMD_EFFECT_SSW 5

#define SMD_EFFECT_CI_Z_DL 0

#define SMD_EFFECT_CI_Z_REML 1

#define SMD_EFFECT_CI_Z_MP 2

#define SMD_EFFECT_CI_Z_J 3

#define SMD_EFFECT_CI_Z_KDB 4

#define SMD_EFFECT_CI_HKSJ 5

#define SMD_EFFECT_CI_HKSJ_KDB 6

#define SMD_EFFECT_CI_SSW_KDB 7

// Opaque collection of studies.
typedef struct SmdInput SmdInput;

typedef struct SmdTau2Estimate {
  double value;
  // 1 when the estimate was clamped to zero.
  int32_t truncated;
  // 1 when the iteration limit was reached.
  int32_t max_iter;
  uint64_t iterations;
} SmdTau2Estimate;

typedef struct SmdTau2Interval {
  double lower;
  // +INFINITY when unbounded.
  double upper;
  int32_t lower_truncated;
  int32_t upper_truncated;
  int32_t flat;
} SmdTau2Interval;

typedef struct SmdEffect {
  double value;
  double variance;
} SmdEffect;

typedef struct SmdEffectInterval {
  double lower;
  double upper;
  double center;
  double half_width;
  int32_t degenerate;
} SmdEffectInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// New empty input. Release with `smd_input_free`.
struct SmdInput *smd_input_new(void);

// # Safety
// `handle` must be null or a pointer from `smd_input_new` not yet freed.
void smd_input_free(struct SmdInput *handle);

// Number of studies added so far (0 for a null handle).
//
// # Safety
// `handle` must be null or a live pointer from `smd_input_new`.
size_t smd_input_len(const struct SmdInput *handle);

// Add a study given Hedges's g and its variance.
//
// # Safety
// `handle` must be null or a live pointer from `smd_input_new`.
int32_t smd_input_add_study(struct SmdInput *handle,
                            uint32_t n_t,
                            uint32_t n_c,
                            double g,
                            double var_g);

// Add a study given arm sizes, means and standard deviations.
//
// # Safety
// `handle` must be null or a live pointer from `smd_input_new`.
int32_t smd_input_add_arms(struct SmdInput *handle,
                           uint32_t n_t,
                           double mean_t,
                           double sd_t,
                           uint32_t n_c,
                           double mean_c,
                           double sd_c);

// Point estimate of the between-study variance; `method` is an SMD_TAU2_* value.
//
// # Safety
// `handle` must be a live input pointer and `out` writable.
int32_t smd_tau2(const struct SmdInput *handle, uint32_t method, struct SmdTau2Estimate *out);

// Confidence interval for the between-study variance; `method` is an
// SMD_TAU2_CI_* value and `level` lies in (0, 1).
//
// # Safety
// `handle` must be a live input pointer and `out` writable.
int32_t smd_tau2_ci(const struct SmdInput *handle,
                    uint32_t method,
                    double level,
                    struct SmdTau2Interval *out);

// Overall effect; `weighting` is an SMD_TAU2_* value for inverse-variance
// weights or SMD_EFFECT_SSW.
//
// # Safety
// `handle` must be a live input pointer and `out` writable.
int32_t smd_effect(const struct SmdInput *handle, uint32_t weighting, struct SmdEffect *out);

// Confidence interval for the overall effect; `method` is an SMD_EFFECT_CI_* value.
//
// # Safety
// `handle` must be a live input pointer and `out` writable.
int32_t smd_effect_ci(const struct SmdInput *handle,
                      uint32_t method,
                      double level,
                      struct SmdEffectInterval *out);

// Message for the last failed call on this thread, or "" after a success.
// The pointer stays valid until the next call on the same thread.
const char *smd_last_error_message(void);

// Name of a method selector, or null when out of range. `kind`: 0 tau2
// estimator, 1 tau2 interval, 2 effect weighting, 3 effect interval.
const char *smd_method_name(uint32_t kind, uint32_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMD_META_H */
