/* C interface of the xsfl semantic federated learning library. */

#ifndef XSFL_H
#define XSFL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Bit flags for [`xsfl_run_experiment`].
#define XSFL_RUN_NO_ACT 1

#define XSFL_RUN_ESC_EXPORT 2

// Result codes of every fallible entry point.
typedef enum XsflStatus {
  XSFL_STATUS_OK = 0,
  // A required pointer argument was null.
  XSFL_STATUS_NULL_ARGUMENT = 1,
  // An argument was outside its documented range.
  XSFL_STATUS_INVALID_ARGUMENT = 2,
  // A string argument was not valid UTF-8.
  XSFL_STATUS_INVALID_UTF8 = 3,
  // File system failure.
  XSFL_STATUS_IO = 4,
  // A config, spec, dataset, or model file failed to parse.
  XSFL_STATUS_PARSE = 5,
  // Tensor or model shapes did not line up.
  XSFL_STATUS_DIMENSION = 6,
  // Local training produced a non-finite loss.
  XSFL_STATUS_DIVERGED = 7,
  // Every device was excluded from a round.
  XSFL_STATUS_EMPTY_ROUND = 8,
  // Any other internal failure.
  XSFL_STATUS_INTERNAL = 9,
} XsflStatus;

// Opaque handle to a loaded model (architecture plus parameters).
typedef struct XsflModel XsflModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *xsfl_version(void);

// Message of the last failure on this thread. Valid until the next failing
// call on the same thread; never null.
const char *xsfl_last_error(void);

// Load a serialized model. On success writes a fresh handle into `out`;
// free it with [`xsfl_model_free`].
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum XsflStatus xsfl_model_load(const char *path, struct XsflModel **out);

// Serialize a model to `path`.
//
// # Safety
// `model` must come from this library; `path` must be a valid string.
enum XsflStatus xsfl_model_save(const struct XsflModel *model, const char *path);

// Release a model handle. Null is a no-op.
//
// # Safety
// `model` must be null or a handle returned by this library, not yet freed.
void xsfl_model_free(struct XsflModel *model);

// Number of classes of the model, or 0 on a null handle.
//
// # Safety
// `model` must be null or a valid handle.
uint32_t xsfl_model_classes(const struct XsflModel *model);

// Length of the transmitted semantic vector, or 0 on a null handle.
//
// # Safety
// `model` must be null or a valid handle.
uint32_t xsfl_model_semantic_dim(const struct XsflModel *model);

// Expected pixel count of one input image (channels * height * width).
//
// # Safety
// `model` must be null or a valid handle.
uint64_t xsfl_model_input_len(const struct XsflModel *model);

// Total trainable parameter count.
//
// # Safety
// `model` must be null or a valid handle.
uint64_t xsfl_model_param_count(const struct XsflModel *model);

// Classify one image. `pixels` holds `xsfl_model_input_len` reals in
// [0, 1]; the semantic vector crosses a channel with the given gain and
// noise before decoding. Writes the class into `out_class` and, when
// `out_logits` is non-null, the per-class logits into its first
// `xsfl_model_classes` slots.
//
// # Safety
// Pointers must be valid for the documented lengths.
enum XsflStatus xsfl_model_predict(const struct XsflModel *model,
                                   const double *pixels,
                                   uintptr_t pixels_len,
                                   double gain,
                                   double noise_std,
                                   uint64_t seed,
                                   uint32_t *out_class,
                                   double *out_logits);

// Explain one image: writes `<stem>.esc.<l>.pgm` per semantic feature plus
// `<stem>.esc.mean.pgm` into `out_dir`.
//
// # Safety
// Pointers must be valid; `pixels` must hold `pixels_len` reals.
enum XsflStatus xsfl_model_explain(const struct XsflModel *model,
                                   const double *pixels,
                                   uintptr_t pixels_len,
                                   double slope,
                                   const char *out_dir,
                                   const char *stem);

// Run a full experiment from a config file, writing `metrics.csv`,
// `model.scm`, and optional heatmaps into `out_dir`. A non-negative
// `seed_override` replaces the config seed.
//
// # Safety
// `config_path` and `out_dir` must be valid NUL-terminated strings.
enum XsflStatus xsfl_run_experiment(const char *config_path,
                                    const char *out_dir,
                                    int64_t seed_override,
                                    uint32_t flags);

// Synthesize a fire-like dataset from a spec file into class
// subdirectories under `out_dir`.
//
// # Safety
// Both arguments must be valid NUL-terminated strings.
enum XsflStatus xsfl_synthesize(const char *spec_path, const char *out_dir);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* XSFL_H */
