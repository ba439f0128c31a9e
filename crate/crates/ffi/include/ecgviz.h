#ifndef ECGVIZ_H
#define ECGVIZ_H

/* Generated by cbindgen from ecgviz-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirror the CLI exit codes.
typedef enum EvzStatus {
  EVZ_STATUS_OK = 0,
  // Invalid arguments or misuse of the API.
  EVZ_STATUS_USAGE = 1,
  // Unreadable, malformed, or insufficient data.
  EVZ_STATUS_DATA = 2,
  // A numeric failure (divergence, non-finite values).
  EVZ_STATUS_NUMERIC = 3,
} EvzStatus;

// Opaque window inventory.
typedef struct EvzDataset EvzDataset;

// Opaque trained (or initialized) network.
typedef struct EvzModel EvzModel;

// Training hyperparameters. Zeroed fields fall back to the published
// protocol (lr 0.005, momentum 0.7, batch 16, 30 epochs).
typedef struct EvzTrainConfig {
  double lr;
  double momentum;
  uint32_t batch_size;
  uint32_t epochs;
  uint64_t seed;
  // Windows drawn per class for the training split; the remainder is
  // ignored here (evaluate on a separate dataset or the same one).
  uint32_t split_per_class;
} EvzTrainConfig;

// Aggregate evaluation scores. Macro fields are NaN when undefined.
typedef struct EvzMetrics {
  double accuracy;
  double macro_precision;
  double macro_recall;
  double macro_f1;
  // Zero when any per-class metric was undefined.
  int32_t complete;
} EvzMetrics;

// Mask-learning options. Zeroed weight/step fields fall back to the
// published settings (1, 0.001, 0.001, 500 iterations, baseline 0).
typedef struct EvzMaskOptions {
  double sparsity_weight;
  double smoothness_weight;
  double step_size;
  uint32_t iterations;
  double replacement;
  // Nonzero selects the literal objective instead of the deletion one.
  int32_t literal_convention;
} EvzMaskOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *evz_version(void);

// Copies the last error message into `buf` (NUL-terminated, truncated to
// `cap`). Returns the full message length in bytes, excluding the NUL.
//
// # Safety
// `buf` must point to `cap` writable bytes (or be null to query the length).
size_t evz_last_error(char *buf, size_t cap);

// Generates a balanced synthetic dataset: `per_class` windows of each of
// the 8 rhythm classes, with ground-truth anomaly spans.
//
// # Safety
// `out` must be a valid pointer to an `EvzDataset*` slot.
enum EvzStatus evz_dataset_synth(uint32_t per_class, uint64_t seed, struct EvzDataset **out);

// Opens a CSV dataset directory (the layout written by the CLI).
//
// # Safety
// `dir` must be a NUL-terminated path; `out` a valid slot.
enum EvzStatus evz_dataset_open(const char *dir, struct EvzDataset **out);

// Number of analysis windows in the dataset.
//
// # Safety
// `dataset` must be a live handle from this library (or null, yielding 0).
size_t evz_dataset_window_count(const struct EvzDataset *dataset);

// Number of ground-truth anomaly intervals known for a window id.
//
// # Safety
// `dataset` must be a live handle; `window_id` NUL-terminated.
size_t evz_dataset_ground_truth_count(const struct EvzDataset *dataset, const char *window_id);

// Frees a dataset handle. Null is a no-op.
//
// # Safety
// `dataset` must have been returned by this library and not freed before.
void evz_dataset_free(struct EvzDataset *dataset);

// Trains a network of `model_kind` ("classifier", "camnet", or "lstmvis")
// on a balanced split of the dataset and returns the trained model.
//
// # Safety
// All pointers must be valid; `model_kind` NUL-terminated.
enum EvzStatus evz_train(const struct EvzDataset *dataset,
                         const char *model_kind,
                         int32_t paper_scale,
                         const struct EvzTrainConfig *config,
                         struct EvzModel **out);

// Saves a model checkpoint.
//
// # Safety
// `model` must be a live handle; `path` NUL-terminated.
enum EvzStatus evz_model_save(const struct EvzModel *model, const char *path);

// Loads a model checkpoint of any kind.
//
// # Safety
// `path` NUL-terminated; `out` a valid slot.
enum EvzStatus evz_model_load(const char *path, struct EvzModel **out);

// Frees a model handle. Null is a no-op.
//
// # Safety
// `model` must have been returned by this library and not freed before.
void evz_model_free(struct EvzModel *model);

// Classifies one window. `probs` (8 doubles) and `predicted` may each be
// null when not wanted.
//
// # Safety
// `window` must point to `len` doubles; output pointers as documented.
enum EvzStatus evz_predict(const struct EvzModel *model,
                           const double *window,
                           size_t len,
                           double *probs,
                           uint32_t *predicted);

// Evaluates a model over every window in the dataset.
//
// # Safety
// All pointers must be valid.
enum EvzStatus evz_evaluate(const struct EvzModel *model,
                            const struct EvzDataset *dataset,
                            struct EvzMetrics *out);

// Writes the class activation overlay (values in `[0, 1]`, one per input
// sample) for `class_index` into `overlay`. The model must be a camnet.
//
// # Safety
// `window` and `overlay` must each point to `len` doubles.
enum EvzStatus evz_cam_overlay(const struct EvzModel *model,
                               const double *window,
                               size_t len,
                               uint32_t class_index,
                               double *overlay);

// Learns a deletion mask against the model and writes the saliency overlay
// into `overlay`.
//
// # Safety
// `window` and `overlay` must each point to `len` doubles; `options` may be
// null for the published defaults.
enum EvzStatus evz_mask_overlay(const struct EvzModel *model,
                                const double *window,
                                size_t len,
                                uint32_t class_index,
                                const struct EvzMaskOptions *options,
                                double *overlay);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECGVIZ_H */
