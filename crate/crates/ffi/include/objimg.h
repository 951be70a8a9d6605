#ifndef OBJIMG_H
#define OBJIMG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ObjimgStatus {
  OBJIMG_STATUS_OK = 0,
  OBJIMG_STATUS_NULL_POINTER = 1,
  OBJIMG_STATUS_DIMENSION = 2,
  OBJIMG_STATUS_NUMERICAL = 3,
  OBJIMG_STATUS_PARAMETER = 4,
  OBJIMG_STATUS_FORMAT = 5,
  OBJIMG_STATUS_PLACEMENT = 6,
  OBJIMG_STATUS_IO = 7,
  OBJIMG_STATUS_INVALID_UTF8 = 8,
  OBJIMG_STATUS_PANIC = 9,
} ObjimgStatus;

/**
 * A trained sampling + reconstruction model.
 */
typedef struct ObjimgModel ObjimgModel;

/**
 * A binary ±1 pattern stack.
 */
typedef struct ObjimgPatterns ObjimgPatterns;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *objimg_last_error(void);

/**
 * Uniform random ±1 patterns: `m` patterns of `n`×`n`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum ObjimgStatus objimg_patterns_random(size_t m,
                                         size_t n,
                                         uint64_t seed,
                                         struct ObjimgPatterns **out);

/**
 * Load an SPIP pattern file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum ObjimgStatus objimg_patterns_read(const char *path, struct ObjimgPatterns **out);

/**
 * Save as an SPIP pattern file.
 *
 * # Safety
 * `patterns` must be a live handle; `path` a nul-terminated string.
 */
enum ObjimgStatus objimg_patterns_write(const struct ObjimgPatterns *patterns, const char *path);

/**
 * # Safety
 * `patterns` must be null or a handle not yet freed.
 */
void objimg_patterns_free(struct ObjimgPatterns *patterns);

/**
 * Pattern count `m` and side `n`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ObjimgStatus objimg_patterns_dims(const struct ObjimgPatterns *patterns, size_t *m, size_t *n);

/**
 * Mutual coherence of the column-normalized pattern matrix and its Welch bound.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ObjimgStatus objimg_patterns_coherence(const struct ObjimgPatterns *patterns,
                                            double *mu,
                                            double *welch);

/**
 * Noise-free single-pixel measurement `y = Φ·x` of an `n`×`n` row-major scene into `m` values.
 *
 * # Safety
 * `scene` must hold `n*n` values and `y` room for `m`.
 */
enum ObjimgStatus objimg_measure(const struct ObjimgPatterns *patterns,
                                 const double *scene,
                                 size_t scene_len,
                                 double *y,
                                 size_t y_len);

/**
 * Simulated differential acquisition with reading noise `sigma` (relative to
 * mean |y|) and `bits`-bit quantization (0 disables it).
 *
 * # Safety
 * `scene` must hold `scene_len` values and `y` room for `y_len`.
 */
enum ObjimgStatus objimg_acquire(const struct ObjimgPatterns *patterns,
                                 const double *scene,
                                 size_t scene_len,
                                 double sigma,
                                 uint32_t bits,
                                 uint64_t seed,
                                 double *y,
                                 size_t y_len);

/**
 * Load a model from an SPCK checkpoint.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum ObjimgStatus objimg_model_read(const char *path, struct ObjimgModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void objimg_model_free(struct ObjimgModel *model);

/**
 * Image side `n` and measurement count `m`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ObjimgStatus objimg_model_dims(const struct ObjimgModel *model, size_t *n, size_t *m);

/**
 * The model's binarized patterns as a new handle.
 *
 * # Safety
 * `model` must be live and `out` writable.
 */
enum ObjimgStatus objimg_model_patterns(const struct ObjimgModel *model,
                                        struct ObjimgPatterns **out);

/**
 * Reconstruct an `n`×`n` image from `m` measurements.
 *
 * # Safety
 * `y` must hold `y_len` values and `image` room for `image_len`.
 */
enum ObjimgStatus objimg_model_reconstruct(const struct ObjimgModel *model,
                                           const double *y,
                                           size_t y_len,
                                           double *image,
                                           size_t image_len);

/**
 * Measure a scene with the model's patterns and reconstruct it.
 *
 * # Safety
 * `scene` must hold `scene_len` values and `image` room for `image_len`.
 */
enum ObjimgStatus objimg_model_predict(const struct ObjimgModel *model,
                                       const double *scene,
                                       size_t scene_len,
                                       double *image,
                                       size_t image_len);

/**
 * PSNR in dB of two `side`×`side` images (99 dB when identical).
 *
 * # Safety
 * `a` and `b` must hold `side*side` values; `out` must be writable.
 */
enum ObjimgStatus objimg_psnr(const double *a,
                              const double *b,
                              size_t side,
                              double peak,
                              double *out);

/**
 * Mean SSIM over 8×8 windows of two `side`×`side` images.
 *
 * # Safety
 * `a` and `b` must hold `side*side` values; `out` must be writable.
 */
enum ObjimgStatus objimg_ssim(const double *a, const double *b, size_t side, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBJIMG_H */
