#ifndef FAIRAUDIT_H
#define FAIRAUDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FaMethod {
  FA_METHOD_AUTO = 0,
  FA_METHOD_EXACT = 1,
  FA_METHOD_SAMPLED = 2,
} FaMethod;

typedef enum FaStatus {
  FA_STATUS_OK = 0,
  FA_STATUS_NULL_POINTER = 1,
  FA_STATUS_INVALID_ARGUMENT = 2,
  FA_STATUS_IO = 3,
  FA_STATUS_PARSE = 4,
  FA_STATUS_DIMENSION_MISMATCH = 5,
  FA_STATUS_EXPLAIN = 6,
  FA_STATUS_FAIRNESS = 7,
  FA_STATUS_REWEIGH = 8,
  FA_STATUS_PANIC = 9,
} FaStatus;

/**
 * Opaque model handle.
 */
typedef struct FaModel FaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fa_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fa_version(void);

/**
 * Loads a model file. On success `*out` owns a handle to release with
 * [`fa_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum FaStatus fa_model_load(const char *path, struct FaModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from [`fa_model_load`] not yet freed.
 */
void fa_model_free(struct FaModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum FaStatus fa_model_feature_count(const struct FaModel *model, size_t *out);

/**
 * Favorable-class probabilities for `n_rows` row-major rows of
 * `n_cols` features, written to `out[0..n_rows]`.
 *
 * # Safety
 * `x` must hold `n_rows * n_cols` doubles and `out` `n_rows`.
 */
enum FaStatus fa_model_predict_proba(const struct FaModel *model,
                                     const double *x,
                                     size_t n_rows,
                                     size_t n_cols,
                                     double *out);

/**
 * Shapley values of one instance against a background sample. Writes
 * `n_cols` attributions to `phi` and the base value to `phi0`.
 *
 * # Safety
 * `x` must hold `n_cols` doubles, `background` `n_background * n_cols`,
 * `phi` `n_cols`, and `phi0` must be writable.
 */
enum FaStatus fa_model_explain(const struct FaModel *model,
                               const double *x,
                               size_t n_cols,
                               const double *background,
                               size_t n_background,
                               enum FaMethod method,
                               size_t permutations,
                               size_t exact_threshold,
                               uint64_t seed,
                               double *phi,
                               double *phi0);

/**
 * Disparate impact of 0/1 predictions. An infinite ratio is reported as
 * `+INFINITY` and 0/0 as NaN.
 *
 * # Safety
 * `predictions` and `sensitive` must hold `n` bytes; `out` writable.
 */
enum FaStatus fa_disparate_impact(const uint8_t *predictions,
                                  const uint8_t *sensitive,
                                  size_t n,
                                  double *out);

/**
 * True-positive rate of the unprivileged group minus the privileged group.
 *
 * # Safety
 * The three arrays must hold `n` bytes; `out` writable.
 */
enum FaStatus fa_equal_opportunity(const uint8_t *predictions,
                                   const uint8_t *labels,
                                   const uint8_t *sensitive,
                                   size_t n,
                                   double *out);

/**
 * kNN consistency of 0/1 predictions over row-major features, with column
 * `sensitive_index` removed before the neighbor search.
 *
 * # Safety
 * `predictions` must hold `n_rows` bytes, `features` `n_rows * n_cols`
 * doubles; `out` writable.
 */
enum FaStatus fa_consistency(const uint8_t *predictions,
                             const double *features,
                             size_t n_rows,
                             size_t n_cols,
                             size_t sensitive_index,
                             size_t k,
                             bool self_inclusion,
                             double *out);

/**
 * Reweighing cell weights from labels and group membership, written to
 * `out[2 * a + y]`.
 *
 * # Safety
 * `labels` and `sensitive` must hold `n` bytes; `out` must hold 4 doubles.
 */
enum FaStatus fa_reweigh_cell_weights(const uint8_t *labels,
                                      const uint8_t *sensitive,
                                      size_t n,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRAUDIT_H */
