#ifndef SOMN_H
#define SOMN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Paired test selector for [`somn_paired_test`].
 */
#define SOMN_TEST_PAIRED_T 0

#define SOMN_TEST_WILCOXON 1

enum SomnStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  SOMN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SOMN_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument value (index out of range, non-UTF-8 path, bad config).
   */
  SOMN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Unreadable or malformed input data, including bundles and EDF files.
   */
  SOMN_STATUS_DATA = 3,
  /**
   * A computation failed for a reason other than the input.
   */
  SOMN_STATUS_INTERNAL = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  SOMN_STATUS_PANIC = 5,
};
#ifndef __cplusplus
typedef int32_t SomnStatus;
#endif // __cplusplus

/**
 * Loaded model bundle.
 */
typedef struct SomnBundle SomnBundle;

/**
 * Per-epoch staging of one recording.
 */
typedef struct SomnScore SomnScore;

typedef struct SomnMetrics {
  double accuracy;
  /**
   * Mean F1 over classes with nonzero support.
   */
  double macro_f1;
  double kappa;
  uint64_t total;
} SomnMetrics;

typedef struct SomnTestResult {
  double statistic;
  double p_value;
  double mean_diff;
  size_t n;
} SomnTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *somn_version(void);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next `somn_*` call on the same thread.
 */
const char *somn_last_error(void);

/**
 * Static name for a stage code (0 W, 1 N1, 2 N2, 3 N3, 4 REM), or null.
 */
const char *somn_stage_name(uint8_t code);

/**
 * Load a `.somn` bundle. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t somn_bundle_load(const char *path, struct SomnBundle **out);

/**
 * Number of feature columns the bundle expects before selection.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t somn_bundle_n_features(const struct SomnBundle *bundle);

/**
 * # Safety
 * `bundle` must be null or a handle from [`somn_bundle_load`] not yet freed.
 */
void somn_bundle_free(struct SomnBundle *bundle);

/**
 * Stage every 30 s epoch of an EDF recording. `channel` may be null to use
 * the channel stored in the bundle's configuration.
 *
 * # Safety
 * `bundle` must be a live handle, `psg_path` (and `channel` if non-null)
 * NUL-terminated strings, `out` a valid pointer.
 */
int32_t somn_score_recording(const struct SomnBundle *bundle,
                             const char *psg_path,
                             const char *channel,
                             struct SomnScore **out);

/**
 * # Safety
 * `score` must be null or a live handle.
 */
size_t somn_score_len(const struct SomnScore *score);

/**
 * Stage code and the five class probabilities (W, N1, N2, N3, REM order)
 * of epoch `index`. `probs` may be null; otherwise it must hold 5 doubles.
 *
 * # Safety
 * `score` must be a live handle, `stage` valid, `probs` null or writable
 * for 5 elements.
 */
int32_t somn_score_epoch(const struct SomnScore *score,
                         size_t index,
                         uint8_t *stage,
                         double *probs);

/**
 * Write the staging as CSV (same layout as `somn score`).
 *
 * # Safety
 * `score` must be a live handle and `path` a NUL-terminated string.
 */
int32_t somn_score_write_csv(const struct SomnScore *score, const char *path);

/**
 * # Safety
 * `score` must be null or a handle from [`somn_score_recording`] not yet
 * freed.
 */
void somn_score_free(struct SomnScore *score);

/**
 * Accuracy, macro-F1 and Cohen's kappa of a `k × k` row-major confusion
 * matrix (rows true, columns predicted).
 *
 * # Safety
 * `counts` must point to `k * k` values and `out` be writable.
 */
int32_t somn_metrics(const uint64_t *counts, size_t k, struct SomnMetrics *out);

/**
 * Two-sided paired test of `a` against `b` (`n` pairs each); `kind` is
 * [`SOMN_TEST_PAIRED_T`] or [`SOMN_TEST_WILCOXON`].
 *
 * # Safety
 * `a` and `b` must point to `n` doubles and `out` be writable.
 */
int32_t somn_paired_test(const double *a,
                         const double *b,
                         size_t n,
                         int32_t kind,
                         struct SomnTestResult *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SOMN_H */
