#ifndef SLEEPCOACH_H
#define SLEEPCOACH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum sc_status {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_ARGUMENT = 2,
  SC_STATUS_DIMENSION_MISMATCH = 3,
  SC_STATUS_UNKNOWN_ARM = 4,
  SC_STATUS_CORRUPT_STATE = 5,
  SC_STATUS_NUMERIC = 6,
  SC_STATUS_STATISTICS = 7,
  SC_STATUS_PANIC = 99,
} sc_status;

/**
 * Opaque LinUCB model.
 */
typedef struct sc_bandit sc_bandit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *sc_last_error(void);

/**
 * Length of the context vectors produced by [`sc_featurize`].
 */
size_t sc_context_dim(void);

/**
 * Creates a model with `n_arms` named arms. `*out` receives the handle,
 * to be released with [`sc_bandit_free`].
 *
 * # Safety
 * `arm_names` must point to `n_arms` NUL-terminated strings; `out` must be
 * writable.
 */
enum sc_status sc_bandit_new(const char *const *arm_names,
                             size_t n_arms,
                             size_t dim,
                             double alpha,
                             uint64_t seed,
                             struct sc_bandit **out);

/**
 * # Safety
 * `bandit` must come from this library and not be used afterwards.
 */
void sc_bandit_free(struct sc_bandit *bandit);

/**
 * # Safety
 * `bandit` must be a live handle.
 */
size_t sc_bandit_arm_count(const struct sc_bandit *bandit);

/**
 * Writes each arm's UCB score into `out_ucb[0..n_arms]`.
 *
 * # Safety
 * `x` must hold `len` doubles and `out_ucb` room for `out_len`.
 */
enum sc_status sc_bandit_score(const struct sc_bandit *bandit,
                               const double *x,
                               size_t len,
                               double *out_ucb,
                               size_t out_len);

/**
 * # Safety
 * `x` must hold `len` doubles; `out_arm` must be writable.
 */
enum sc_status sc_bandit_select(const struct sc_bandit *bandit,
                                const double *x,
                                size_t len,
                                size_t *out_arm);

/**
 * Applies `A += x xᵀ`, `b += r x` to arm `arm`. `reward` must be in [0, 1].
 *
 * # Safety
 * `bandit` must be a live handle not used concurrently; `x` must hold
 * `len` doubles.
 */
enum sc_status sc_bandit_update(struct sc_bandit *bandit,
                                size_t arm,
                                const double *x,
                                size_t len,
                                double reward);

/**
 * Serializes the model. Release `*out_buf` with [`sc_buffer_free`].
 *
 * # Safety
 * `out_buf` and `out_len` must be writable.
 */
enum sc_status sc_bandit_save(const struct sc_bandit *bandit, uint8_t **out_buf, size_t *out_len);

/**
 * # Safety
 * `buf` must hold `len` bytes; `out` must be writable.
 */
enum sc_status sc_bandit_load(const uint8_t *buf, size_t len, struct sc_bandit **out);

/**
 * # Safety
 * `buf`/`len` must be exactly what [`sc_bandit_save`] returned.
 */
void sc_buffer_free(uint8_t *buf, size_t len);

/**
 * One-hot context for a local hour, temperature and provider condition
 * text, using the default temperature thresholds.
 *
 * # Safety
 * `condition` must be NUL-terminated; `out` must have room for `out_len`
 * doubles, at least [`sc_context_dim`].
 */
enum sc_status sc_featurize(uint8_t local_hour,
                            double temperature_c,
                            const char *condition,
                            double *out,
                            size_t out_len);

/**
 * Two-sided paired t-test of `a − b`.
 *
 * # Safety
 * `a` and `b` must hold `n` doubles; outputs must be writable.
 */
enum sc_status sc_paired_t(const double *a,
                           const double *b,
                           size_t n,
                           double *out_t,
                           double *out_p);

/**
 * Wilcoxon signed-rank test of `a − b`: exact for up to 20 nonzero
 * differences, normal approximation above.
 *
 * # Safety
 * `a` and `b` must hold `n` doubles; outputs must be writable.
 */
enum sc_status sc_wilcoxon(const double *a,
                           const double *b,
                           size_t n,
                           double *out_w,
                           double *out_p);

/**
 * Least-squares line through `(x[i], y[i])` with the slope's two-sided p.
 *
 * # Safety
 * `x` and `y` must hold `n` doubles; outputs must be writable.
 */
enum sc_status sc_ols_trend(const double *x,
                            const double *y,
                            size_t n,
                            double *out_slope,
                            double *out_intercept,
                            double *out_r_squared,
                            double *out_p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLEEPCOACH_H */
