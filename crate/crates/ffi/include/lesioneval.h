#ifndef LESIONEVAL_H
#define LESIONEVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LeStatus {
  LE_STATUS_OK = 0,
  LE_STATUS_NULL_POINTER = 1,
  LE_STATUS_INVALID_ARGUMENT = 2,
  LE_STATUS_IO = 3,
  LE_STATUS_PARSE = 4,
  LE_STATUS_DIMENSION_MISMATCH = 5,
  LE_STATUS_DEGENERATE = 6,
  LE_STATUS_INTERNAL = 7,
} LeStatus;

typedef enum LeMethod {
  LE_METHOD_EXACT = 0,
  LE_METHOD_NORMAL_APPROX = 1,
  LE_METHOD_CHI_SQUARED = 2,
} LeMethod;

typedef struct LeLabelMap LeLabelMap;

typedef struct LeMask LeMask;

typedef struct LeConfusion {
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  uint64_t tn;
} LeConfusion;

typedef struct LeDetection {
  double f1;
  double precision;
  /**
   * NaN when `recall_defined` is 0 (lesion-free ground truth).
   */
  double recall;
  uint8_t recall_defined;
  size_t tpl;
  size_t fpl;
  size_t fnl;
} LeDetection;

typedef struct LeTestResult {
  double statistic;
  double p_value;
  enum LeMethod method;
  size_t n_effective;
} LeTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *le_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *le_version(void);

/**
 * Loads a NIfTI-1 file (optionally gzipped) and binarizes it with
 * `value > threshold`.
 */
enum LeStatus le_mask_load(const char *path, double threshold, struct LeMask **out);

/**
 * Copies `nx * ny * nz` voxels (x fastest; nonzero is foreground) into a
 * new mask.
 */
enum LeStatus le_mask_from_buffer(const uint8_t *voxels,
                                  size_t nx,
                                  size_t ny,
                                  size_t nz,
                                  const double *spacing,
                                  struct LeMask **out);

void le_mask_free(struct LeMask *mask);

/**
 * Writes the grid dimensions into `dims[0..3]`.
 */
enum LeStatus le_mask_dims(const struct LeMask *mask, size_t *dims);

enum LeStatus le_mask_positive_count(const struct LeMask *mask, uint64_t *out);

/**
 * Labels connected components; `connectivity` is 6, 18 or 26.
 */
enum LeStatus le_label_components(const struct LeMask *mask,
                                  uint8_t connectivity,
                                  struct LeLabelMap **out);

void le_label_map_free(struct LeLabelMap *labels);

enum LeStatus le_label_map_count(const struct LeLabelMap *labels, size_t *out);

/**
 * Borrows the label array (0 = background, components 1..=count in raster
 * order of first voxel). Valid while the label map lives.
 */
enum LeStatus le_label_map_labels(const struct LeLabelMap *labels,
                                  const uint32_t **out,
                                  size_t *len);

enum LeStatus le_confusion_counts(const struct LeMask *gt,
                                  const struct LeMask *pred,
                                  struct LeConfusion *out);

enum LeStatus le_dsc(const struct LeConfusion *c, double *out);

/**
 * Normalized Dice with reference foreground fraction `r` in (0, 1).
 */
enum LeStatus le_ndsc(const struct LeConfusion *c, double r, double *out);

/**
 * Lesion-level detection scores from two label maps on the same grid.
 */
enum LeStatus le_detection(const struct LeLabelMap *gt,
                           const struct LeLabelMap *pred,
                           struct LeDetection *out);

/**
 * Two-sided Wilcoxon signed-rank test on paired differences.
 */
enum LeStatus le_wilcoxon(const double *diffs, size_t n, struct LeTestResult *out);

/**
 * Two-sided Mann-Whitney U test; the statistic is U of the first sample.
 */
enum LeStatus le_mann_whitney(const double *a,
                              size_t na,
                              const double *b,
                              size_t nb,
                              struct LeTestResult *out);

/**
 * Benjamini-Hochberg adjusted p-values written to `adjusted[0..n]`.
 */
enum LeStatus le_bh_fdr(const double *p, size_t n, double q, double *adjusted);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LESIONEVAL_H */
