#ifndef LYAPNET_H
#define LYAPNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LySystem {
  LY_SYSTEM_LORENZ = 0,
  LY_SYSTEM_COUPLED = 1,
} LySystem;

typedef enum LyStatus {
  LY_STATUS_OK = 0,
  LY_STATUS_NULL_POINTER = 1,
  LY_STATUS_INVALID_ARGUMENT = 2,
  LY_STATUS_NUMERIC = 3,
  LY_STATUS_IO = 4,
  LY_STATUS_FORMAT = 5,
  LY_STATUS_PANIC = 6,
} LyStatus;

typedef enum LyProfile {
  LY_PROFILE_PAPER = 0,
  LY_PROFILE_DESK = 1,
} LyProfile;

/**
 * Models sharing one architecture; predictions are mean and population std over members.
 */
typedef struct LyEnsemble LyEnsemble;

/**
 * One trained network.
 */
typedef struct LyModel LyModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *ly_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ly_version(void);

/**
 * Length of the series a model expects.
 */
size_t ly_series_len(void);

/**
 * Number of exponents of a system (3 or 6).
 */
size_t ly_system_dim(enum LySystem system);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LyStatus ly_model_load(const char *path, struct LyModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from `ly_model_load` and not be used afterwards.
 */
void ly_model_free(struct LyModel *model);

/**
 * Number of exponents the model predicts.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum LyStatus ly_model_n_outputs(const struct LyModel *model, size_t *out);

/**
 * Predicts the spectrum of one normalized series.
 *
 * # Safety
 * `series` must point to `len` doubles and `out` to `out_len` doubles.
 */
enum LyStatus ly_model_predict(const struct LyModel *model,
                               const double *series,
                               size_t len,
                               double *out,
                               size_t out_len);

/**
 * Creates an empty ensemble.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LyStatus ly_ensemble_new(struct LyEnsemble **out);

/**
 * Loads every model listed in a directory written by `lyapnet train`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LyStatus ly_ensemble_load_dir(const char *dir, struct LyEnsemble **out);

/**
 * Loads a model file and appends it; its architecture must match the existing members.
 *
 * # Safety
 * `ensemble` must be a live handle and `path` a NUL-terminated string.
 */
enum LyStatus ly_ensemble_add_file(struct LyEnsemble *ensemble, const char *path);

/**
 * Number of members.
 *
 * # Safety
 * `ensemble` must be a live handle and `out` a valid pointer.
 */
enum LyStatus ly_ensemble_size(const struct LyEnsemble *ensemble, size_t *out);

/**
 * Mean and population standard deviation of the members' predictions.
 *
 * # Safety
 * `series` must point to `len` doubles; `mean` and `std` to `n_out` doubles each.
 */
enum LyStatus ly_ensemble_predict(const struct LyEnsemble *ensemble,
                                  const double *series,
                                  size_t len,
                                  double *mean,
                                  double *std,
                                  size_t n_out);

/**
 * Releases an ensemble. Null is ignored.
 *
 * # Safety
 * `ensemble` must come from this library and not be used afterwards.
 */
void ly_ensemble_free(struct LyEnsemble *ensemble);

/**
 * Classical spectrum (descending) from the default initial state.
 * A `measure_time` of zero or less keeps the profile's value.
 *
 * # Safety
 * `out` must point to `out_len` doubles, with `out_len` equal to the system dimension.
 */
enum LyStatus ly_classical_spectrum(enum LySystem system,
                                    double sigma,
                                    double r,
                                    double b,
                                    enum LyProfile profile,
                                    double measure_time,
                                    double *out,
                                    size_t out_len);

/**
 * Maps a series onto [0, 1]. A constant series becomes one value drawn from `(seed, index)`.
 *
 * # Safety
 * `series` and `out` must each point to `len` doubles.
 */
enum LyStatus ly_normalize(const double *series,
                           size_t len,
                           uint64_t seed,
                           uint64_t index,
                           double *out);

/**
 * Normalized inference series at one parameter point, identical to sweep cell `index` run with `seed`.
 *
 * # Safety
 * `out` must point to `out_len` doubles, with `out_len` equal to `ly_series_len()`.
 */
enum LyStatus ly_prediction_series(enum LySystem system,
                                   double sigma,
                                   double r,
                                   double b,
                                   uint64_t seed,
                                   uint64_t index,
                                   double *out,
                                   size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LYAPNET_H */
