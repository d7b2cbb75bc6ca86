/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ICI_H
#define ICI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum {
  ICI_STATUS_OK = 0,
  ICI_STATUS_NULL_POINTER = 1,
  ICI_STATUS_INVALID_ARGUMENT = 2,
  ICI_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Input matrix is not Hermitian positive definite.
   */
  ICI_STATUS_NOT_POSITIVE_DEFINITE = 4,
  /**
   * Training data has no spread.
   */
  ICI_STATUS_CONSTANT_DATA = 5,
  ICI_STATUS_IO = 6,
  ICI_STATUS_PARSE = 7,
  /**
   * Caller buffer too small; the required size was written back.
   */
  ICI_STATUS_BUFFER_TOO_SMALL = 8,
  ICI_STATUS_INTERNAL = 9,
} IciStatus;

/**
 * Opaque trained ZRD-SVDD detector.
 */
typedef struct IciSvddModel IciSvddModel;

typedef struct {
  double re;
  double im;
} IciComplex;

/**
 * Sensitivity, precision and F1. A `*_defined` flag of `false` marks a
 * vanishing denominator; the value is then 0.
 */
typedef struct {
  double sensitivity;
  double precision;
  double f1;
  bool sensitivity_defined;
  bool precision_defined;
  bool f1_defined;
} IciMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. The pointer stays valid until
 * the next failing call on the same thread.
 */
const char *ici_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ici_version(void);

/**
 * Trains a ZRD-SVDD detector with default hyper-parameters and calibrates
 * its threshold at `quantile` of the training scores.
 *
 * # Safety
 * `data` must point to `n_samples * dim` doubles, row per sample.
 */
IciStatus ici_svdd_train(const double *data,
                         size_t n_samples,
                         size_t dim,
                         uint64_t seed,
                         double quantile,
                         IciSvddModel **out_model);

/**
 * Parses a model from its JSON serialisation.
 *
 * # Safety
 * `json` must be a NUL-terminated string.
 */
IciStatus ici_svdd_from_json(const char *json, IciSvddModel **out_model);

/**
 * Loads a model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
IciStatus ici_svdd_load(const char *path, IciSvddModel **out_model);

/**
 * Writes the model JSON plus a NUL into `buf`. `required` receives the size
 * including the NUL; with `buf` null only the size is reported.
 *
 * # Safety
 * `buf` must be null or point to `capacity` writable bytes.
 */
IciStatus ici_svdd_to_json(const IciSvddModel *model_ptr,
                           char *buf,
                           size_t capacity,
                           size_t *required);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is a no-op.
 */
void ici_svdd_free(IciSvddModel *model);

/**
 * Expected feature length.
 *
 * # Safety
 * `model` must be a live handle.
 */
IciStatus ici_svdd_input_dim(const IciSvddModel *model_ptr, size_t *out_dim);

/**
 * # Safety
 * `model` must be a live handle.
 */
IciStatus ici_svdd_threshold(const IciSvddModel *model_ptr, double *out_threshold);

/**
 * Anomaly score of raw (unnormalised) features.
 *
 * # Safety
 * `features` must point to `len` doubles.
 */
IciStatus ici_svdd_score(const IciSvddModel *model_ptr,
                         const double *features,
                         size_t len,
                         double *out_score);

/**
 * `score > threshold`.
 *
 * # Safety
 * `features` must point to `len` doubles.
 */
IciStatus ici_svdd_is_anomalous(const IciSvddModel *model_ptr,
                                const double *features,
                                size_t len,
                                bool *out_flag);

/**
 * Whitening filter `W = L^{-1}` of a Hermitian positive definite `n x n`
 * covariance, written row-major into `w_out`.
 *
 * # Safety
 * `r` and `w_out` must each hold `n * n` elements.
 */
IciStatus ici_whitening_filter(const IciComplex *r, size_t n, IciComplex *w_out);

/**
 * Lower bound on `P(||R_hat - R||_2 <= epsilon)` for `t_s` samples of
 * `g + n`, with `n` circular Gaussian of per-entry variance `sigma_m^2`.
 *
 * # Safety
 * `g` must hold `n_r` elements.
 */
IciStatus ici_bernstein_lower_bound(double epsilon,
                                    size_t t_s,
                                    double sigma_m,
                                    const IciComplex *g,
                                    size_t n_r,
                                    double *out_bound);

/**
 * Sensitivity, precision and F1 of a confusion matrix.
 *
 * # Safety
 * `out_metrics` must be writable.
 */
IciStatus ici_classification_metrics(uint64_t tp,
                                     uint64_t fp,
                                     uint64_t fn_,
                                     uint64_t tn,
                                     IciMetrics *out_metrics);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICI_H */
