#ifndef RAMIX_H
#define RAMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum RamixStatus {
  RAMIX_STATUS_OK = 0,
  RAMIX_STATUS_NULL_POINTER = 1,
  RAMIX_STATUS_INVALID_INPUT = 2,
  RAMIX_STATUS_CONFIG = 3,
  RAMIX_STATUS_IO = 4,
  RAMIX_STATUS_FORMAT = 5,
  RAMIX_STATUS_TRAINING = 6,
  RAMIX_STATUS_BUFFER_TOO_SMALL = 7,
  RAMIX_STATUS_PANIC = 8,
} RamixStatus;

// Time-frequency transform used to build a scale image.
typedef enum RamixTransform {
  RAMIX_TRANSFORM_STFT = 0,
  RAMIX_TRANSFORM_WVD = 1,
  RAMIX_TRANSFORM_CWT = 2,
} RamixTransform;

// Opaque trained model.
typedef struct RamixModel RamixModel;

// Summary metrics of a scored batch.
typedef struct RamixMetrics {
  size_t n_samples;
  double hamming_loss;
  double one_error;
  double coverage;
  double ranking_loss;
  double average_precision;
  double f1_macro;
  double f1_micro;
} RamixMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ramix_version(void);

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length excluding the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t ramix_last_error_message(char *buf, size_t len);

// Loads a checkpoint file. On success `*out` owns a model to release with `ramix_model_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RamixStatus ramix_model_load(const char *path, struct RamixModel **out);

// Releases a model; null is a no-op.
//
// # Safety
// `model` must come from `ramix_model_load` and not be used afterwards.
void ramix_model_free(struct RamixModel *model);

// Reports the expected image size and label count.
//
// # Safety
// All pointers must be valid; output pointers may be null to skip.
enum RamixStatus ramix_model_shape(const struct RamixModel *model,
                                   size_t *height,
                                   size_t *width,
                                   size_t *n_labels);

// Scores one row-major image in [0,1] of the model's input size. Writes
// `n_labels` sigmoid scores and a bit mask (bit j = label j at or above threshold).
//
// # Safety
// `pixels` must hold `n_pixels` floats, `scores` `n_scores` doubles, `label_bits` one u32.
enum RamixStatus ramix_model_predict_image(const struct RamixModel *model,
                                           const float *pixels,
                                           size_t n_pixels,
                                           double threshold,
                                           double *scores,
                                           size_t n_scores,
                                           uint32_t *label_bits);

// Transforms a raw spectrum with `transform` at the model's input size and scores it.
//
// # Safety
// `signal` must hold `n` doubles, `scores` `n_scores` doubles, `label_bits` one u32.
enum RamixStatus ramix_model_predict_spectrum(const struct RamixModel *model,
                                              const double *signal,
                                              size_t n,
                                              enum RamixTransform transform,
                                              double threshold,
                                              double *scores,
                                              size_t n_scores,
                                              uint32_t *label_bits);

// Writes the `height`×`width` normalized scale image of `signal` into `out` (row-major).
//
// # Safety
// `signal` must hold `n` doubles and `out` `out_len` floats.
enum RamixStatus ramix_scale_image(const double *signal,
                                   size_t n,
                                   enum RamixTransform transform,
                                   size_t height,
                                   size_t width,
                                   float *out,
                                   size_t out_len);

// Multi-label metrics of `n`×`q` row-major scores against 0/1 truths.
// Optional `auc` receives `q` values, NaN where a label has one class only.
//
// # Safety
// `scores` and `truths` must hold `n*q` elements; `out` must be writable;
// `auc` may be null or hold `q` doubles.
enum RamixStatus ramix_metrics(const double *scores,
                               const uint8_t *truths,
                               size_t n,
                               size_t q,
                               double threshold,
                               struct RamixMetrics *out,
                               double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAMIX_H */
