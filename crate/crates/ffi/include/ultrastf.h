#ifndef ULTRASTF_H
#define ULTRASTF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UstfModelKind {
  USTF_MODEL_KIND_ULTRA_STF = 0,
  USTF_MODEL_KIND_SPARSE_TSF = 1,
  USTF_MODEL_KIND_SPARSE_TSF_MLP = 2,
  USTF_MODEL_KIND_LINEAR = 3,
} UstfModelKind;

typedef enum UstfAttention {
  USTF_ATTENTION_RELU = 0,
  USTF_ATTENTION_SOFTMAX = 1,
} UstfAttention;

typedef enum UstfStatus {
  USTF_STATUS_OK = 0,
  USTF_STATUS_NULL_POINTER = 1,
  USTF_STATUS_INVALID_CONFIG = 2,
  USTF_STATUS_SHAPE_MISMATCH = 3,
  USTF_STATUS_DATA_ERROR = 4,
  USTF_STATUS_IO_ERROR = 5,
  USTF_STATUS_FORMAT_ERROR = 6,
  USTF_STATUS_NO_MATCH = 7,
  USTF_STATUS_UNSUPPORTED = 8,
  USTF_STATUS_INTERNAL = 9,
} UstfStatus;

/**
 * Opaque model handle.
 */
typedef struct UstfModel UstfModel;

/**
 * Architecture description mirroring `ModelConfig`.
 */
typedef struct UstfModelSpec {
  enum UstfModelKind kind;
  size_t t_in;
  size_t t_out;
  size_t period;
  size_t shapes;
  size_t blocks;
  size_t heads;
  enum UstfAttention attention;
  size_t mlp_depth;
  size_t mlp_hidden;
} UstfModelSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default architecture: UltraSTF, 720 -> 12, period 12, 16 shapes, 4 blocks.
 */
struct UstfModelSpec ustf_model_spec_default(void);

/**
 * Creates a freshly initialised model. `*out` receives the handle.
 *
 * # Safety
 * `spec` and `out` must be valid pointers.
 */
enum UstfStatus ustf_model_new(const struct UstfModelSpec *spec,
                               uint64_t seed,
                               struct UstfModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum UstfStatus ustf_model_load(const char *path, struct UstfModel **out);

/**
 * Writes a checkpoint file.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum UstfStatus ustf_model_save(const struct UstfModel *model, const char *path);

/**
 * Forecasts `n_channels` independent windows.
 *
 * `input` holds `n_channels * t_in` values, channel-major; `output` must
 * have room for `n_channels * t_out` values and is written channel-major.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum UstfStatus ustf_model_forecast(const struct UstfModel *model,
                                    const double *input,
                                    size_t n_channels,
                                    size_t t_in,
                                    double *output,
                                    size_t output_len);

/**
 * Number of learnable scalars held by `model`.
 *
 * # Safety
 * `model` must come from this library; `out` must be valid.
 */
enum UstfStatus ustf_model_param_count(const struct UstfModel *model, size_t *out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void ustf_model_free(struct UstfModel *model);

/**
 * Parameter count of an architecture. Multi-head specs are counted by
 * enumerating the layout.
 *
 * # Safety
 * `spec` and `out` must be valid pointers.
 */
enum UstfStatus ustf_count_params(const struct UstfModelSpec *spec, size_t *out);

/**
 * Closest z-normalised window of `series` to `shape`.
 *
 * # Safety
 * `shape` must hold `width` values, `series` `len` values; `offset` and
 * `distance` must be valid.
 */
enum UstfStatus ustf_nearest_match(const double *shape,
                                   size_t width,
                                   const double *series,
                                   size_t len,
                                   size_t *offset,
                                   double *distance);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ustf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ustf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ULTRASTF_H */
