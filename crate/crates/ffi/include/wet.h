#ifndef WET_H
#define WET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WetStatus {
  WET_STATUS_OK = 0,
  WET_STATUS_NULL_POINTER = 1,
  WET_STATUS_INVALID_UTF8 = 2,
  WET_STATUS_IO = 3,
  WET_STATUS_PARSE = 4,
  WET_STATUS_VALIDATION = 5,
  WET_STATUS_DIMENSION = 6,
  WET_STATUS_NUMERIC = 7,
  WET_STATUS_LOOKUP = 8,
  WET_STATUS_DIVERGED = 9,
  WET_STATUS_INTERNAL = 10,
  WET_STATUS_BUFFER_TOO_SMALL = 11,
  WET_STATUS_PANIC = 12,
} WetStatus;

/**
 * Opaque model handle.
 */
typedef struct WetModel WetModel;

typedef struct WetMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  /**
   * Number of ratios whose denominator was zero (reported as 0).
   */
  uint32_t degenerate_count;
} WetMetrics;

typedef struct WetTTest {
  double t;
  double df;
  double p_value;
  double mean_diff;
  /**
   * 1 when the paired differences have zero spread.
   */
  uint8_t degenerate;
} WetTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *wet_last_error_message(void);

void wet_clear_last_error(void);

/**
 * Library version as a static string.
 */
const char *wet_version(void);

/**
 * Loads a model bundle written by `wet train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum WetStatus wet_model_load(const char *path, struct WetModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`wet_model_load`] and not be freed twice.
 */
void wet_model_free(struct WetModel *model);

/**
 * Number of branch probabilities [`wet_model_predict_branches`] writes.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum WetStatus wet_model_branch_count(const struct WetModel *model, size_t *out);

/**
 * Decision threshold stored with the model.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum WetStatus wet_model_threshold(const struct WetModel *model, double *out);

/**
 * Ensemble probability that the text is positive.
 *
 * # Safety
 * `model` must be a live handle, `text` NUL-terminated, `probability` writable.
 */
enum WetStatus wet_model_predict(const struct WetModel *model,
                                 const char *text,
                                 uint64_t followers,
                                 uint64_t likes,
                                 uint64_t replies,
                                 uint64_t retweets,
                                 double *probability);

/**
 * Like [`wet_model_predict`], also writing each branch's probability into
 * `branches` (text blocks first, then the feature branch).
 *
 * # Safety
 * As [`wet_model_predict`]; `branches` must hold `capacity` doubles.
 */
enum WetStatus wet_model_predict_branches(const struct WetModel *model,
                                          const char *text,
                                          uint64_t followers,
                                          uint64_t likes,
                                          uint64_t replies,
                                          uint64_t retweets,
                                          double *probability,
                                          double *branches,
                                          size_t capacity);

/**
 * Accuracy, precision, recall and F1 of the positive class.
 *
 * # Safety
 * `out` must be writable.
 */
enum WetStatus wet_metrics_from_counts(uint64_t tp,
                                       uint64_t fp,
                                       uint64_t tn,
                                       uint64_t fn_,
                                       struct WetMetrics *out);

/**
 * Two-sided paired t-test over `n` score pairs.
 *
 * # Safety
 * `a` and `b` must each hold `n` doubles; `out` must be writable.
 */
enum WetStatus wet_paired_t_test(const double *a, const double *b, size_t n, struct WetTTest *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WET_H */
