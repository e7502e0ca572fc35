#ifndef FSL_H
#define FSL_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FslStatus {
  FSL_STATUS_OK = 0,
  FSL_STATUS_NULL_POINTER = 1,
  FSL_STATUS_INVALID_ARGUMENT = 2,
  FSL_STATUS_SHAPE = 3,
  FSL_STATUS_IO = 4,
  FSL_STATUS_FORMAT = 5,
  FSL_STATUS_NUMERIC = 6,
  FSL_STATUS_DATA = 7,
  FSL_STATUS_PANIC = 8,
} FslStatus;

typedef enum FslSplit {
  FSL_SPLIT_BASE = 0,
  FSL_SPLIT_VAL = 1,
  FSL_SPLIT_NOVEL = 2,
} FslSplit;

/**
 * Base, validation and novel splits.
 */
typedef struct FslDataset FslDataset;

/**
 * Encoder parameters and configuration.
 */
typedef struct FslEncoder FslEncoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *fsl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fsl_version(void);

/**
 * Builds a synthetic dataset (gaussian blobs) and partitions its classes into
 * base, validation and novel splits.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum FslStatus fsl_dataset_synthetic(size_t base_classes,
                                     size_t val_classes,
                                     size_t novel_classes,
                                     size_t dim,
                                     size_t per_class,
                                     double class_sep,
                                     double intra_std,
                                     uint64_t seed,
                                     struct FslDataset **out);

/**
 * Loads a dataset directory written by `fsl synth-data`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum FslStatus fsl_dataset_load(const char *dir, struct FslDataset **out);

/**
 * Releases a dataset handle. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle from this library not yet freed.
 */
void fsl_dataset_free(struct FslDataset *ds);

/**
 * Class count, item count and flattened sample width of one split.
 *
 * # Safety
 * `ds` must be a live handle; the out pointers must be writable.
 */
enum FslStatus fsl_dataset_split_info(const struct FslDataset *ds,
                                      enum FslSplit split,
                                      size_t *num_classes,
                                      size_t *num_items,
                                      size_t *sample_dim);

/**
 * Fresh two-layer perceptron encoder.
 *
 * # Safety
 * `out` must be writable.
 */
enum FslStatus fsl_encoder_new_mlp(size_t input_dim,
                                   size_t hidden,
                                   size_t embed_dim,
                                   uint64_t seed,
                                   struct FslEncoder **out);

/**
 * Loads the encoder stored in a checkpoint file.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out` must be writable.
 */
enum FslStatus fsl_encoder_load(const char *file, struct FslEncoder **out);

/**
 * Writes an encoder-only checkpoint.
 *
 * # Safety
 * `enc` must be a live handle; `file` a NUL-terminated string.
 */
enum FslStatus fsl_encoder_save(const struct FslEncoder *enc, const char *file);

/**
 * Releases an encoder handle. Null is ignored.
 *
 * # Safety
 * `enc` must be null or a handle from this library not yet freed.
 */
void fsl_encoder_free(struct FslEncoder *enc);

/**
 * Flattened input width and embedding width of an encoder.
 *
 * # Safety
 * `enc` must be a live handle; the out pointers must be writable.
 */
enum FslStatus fsl_encoder_dims(const struct FslEncoder *enc, size_t *input_dim, size_t *embed_dim);

/**
 * Embeds `rows` samples (`rows x input_dim`) into `out` (`rows x embed_dim`).
 *
 * # Safety
 * Buffers must hold the stated number of doubles.
 */
enum FslStatus fsl_encoder_encode(const struct FslEncoder *enc,
                                  const double *input,
                                  size_t rows,
                                  size_t cols,
                                  double *out,
                                  size_t out_len);

/**
 * N-way K-shot nearest-prototype evaluation over `episodes` episodes drawn
 * from `split` with the evaluation stream of `seed`. Writes the mean
 * accuracy and its 95% confidence half-width.
 *
 * # Safety
 * Handles must be live; the out pointers writable.
 */
enum FslStatus fsl_evaluate(const struct FslEncoder *enc,
                            const struct FslDataset *ds,
                            enum FslSplit split,
                            size_t n_way,
                            size_t k_shot,
                            size_t q_query,
                            size_t episodes,
                            uint64_t seed,
                            double *mean_accuracy,
                            double *ci95);

/**
 * Class means of `support` (`rows x dim`, `k_shot` rows per label) into
 * `out` (`n_way x dim`).
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum FslStatus fsl_class_prototypes(const double *support,
                                    const uint32_t *labels_ptr,
                                    size_t rows,
                                    size_t dim,
                                    size_t n_way,
                                    size_t k_shot,
                                    double *out,
                                    size_t out_len);

/**
 * Contrast between the per-view prototype matrices `p1`, `p2` (`n x dim`).
 * A nonzero `include_positive` adds the matching pair to the denominator.
 *
 * # Safety
 * Buffers must hold `n * dim` doubles; `out` must be writable.
 */
enum FslStatus fsl_inter_class_loss(const double *p1,
                                    const double *p2,
                                    size_t n,
                                    size_t dim,
                                    double kappa,
                                    bool include_positive,
                                    double *out);

/**
 * Mean cosine-softmax loss of queries (`rows x dim`) against hybrid
 * prototypes (`n x dim`).
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum FslStatus fsl_intra_class_loss(const double *query,
                                    const uint32_t *labels_ptr,
                                    size_t rows,
                                    const double *hybrid,
                                    size_t n,
                                    size_t dim,
                                    double tau,
                                    double *out);

/**
 * Mean cross-entropy of the squared-euclidean softmax classifier.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum FslStatus fsl_episode_ce_loss(const double *query,
                                   const uint32_t *labels_ptr,
                                   size_t rows,
                                   const double *protos,
                                   size_t n,
                                   size_t dim,
                                   double *out);

/**
 * True-class probabilities as an `n x (rows / n)` matrix; column `j` of row
 * `c` is the `j`-th query labelled `c`.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum FslStatus fsl_prediction_matrix(const double *query,
                                     const uint32_t *labels_ptr,
                                     size_t rows,
                                     const double *protos,
                                     size_t n,
                                     size_t dim,
                                     double *out,
                                     size_t out_len);

/**
 * Forgetting penalty between current and historical prediction matrices
 * (`n x q`, entries in [0, 1]).
 *
 * # Safety
 * Buffers must hold `n * q` doubles; `out` must be writable.
 */
enum FslStatus fsl_forget_loss(const double *current,
                               const double *history,
                               size_t n,
                               size_t q,
                               double delta,
                               double cos_floor,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FSL_H */
