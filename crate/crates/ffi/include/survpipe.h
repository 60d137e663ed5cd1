#ifndef SURVPIPE_H
#define SURVPIPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Bumped whenever a signature or struct layout in this header changes.
#define SP_ABI_VERSION 1

// Number of statistics written by `survpipe_derive_features`.
#define SP_N_DERIVED 10

typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_ARGUMENT = 1,
  SP_STATUS_INVALID_UTF8 = 2,
  SP_STATUS_IO = 3,
  SP_STATUS_PARSE = 4,
  SP_STATUS_UNKNOWN_FEATURE = 5,
  SP_STATUS_INVALID_ARGUMENT = 6,
  SP_STATUS_MODEL = 7,
  SP_STATUS_INTERNAL = 8,
} SpStatus;

// A trained model loaded from a `survpipe train` model file.
typedef struct SpModel SpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// ABI version of the loaded library; compare with `SP_ABI_VERSION`.
uint32_t survpipe_abi_version(void);

// Message of the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *survpipe_last_error(void);

// Parses a model from JSON text. On success `*out` owns a new handle.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum SpStatus survpipe_model_from_json(const char *json, struct SpModel **out);

// Loads a model file written by `survpipe train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SpStatus survpipe_model_load(const char *path, struct SpModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void survpipe_model_free(struct SpModel *model);

// Number of input features the model expects per row.
//
// # Safety
// `model` must be a live handle or null (which yields 0).
uintptr_t survpipe_model_n_features(const struct SpModel *model);

// Name of feature `index`, or null when out of range. Owned by the handle.
//
// # Safety
// `model` must be a live handle or null.
const char *survpipe_model_feature_name(const struct SpModel *model, uintptr_t index);

// Death probability for each row at each horizon, written to
// `out[row * n_horizons + h]`. Horizons must be non-negative and strictly
// ascending.
//
// # Safety
// `rows` must hold `n_rows * n_cols` doubles, `horizons` `n_horizons`
// doubles and `out` room for `n_rows * n_horizons` doubles.
enum SpStatus survpipe_model_predict_death(const struct SpModel *model,
                                           const double *rows,
                                           uintptr_t n_rows,
                                           uintptr_t n_cols,
                                           const double *horizons,
                                           uintptr_t n_horizons,
                                           double *out);

// Risk score per row (linear predictor or ensemble mortality; higher means
// earlier death expected).
//
// # Safety
// `rows` must hold `n_rows * n_cols` doubles and `out` room for `n_rows`.
enum SpStatus survpipe_model_risk_scores(const struct SpModel *model,
                                         const double *rows,
                                         uintptr_t n_rows,
                                         uintptr_t n_cols,
                                         double *out);

// Harrell's concordance index of `scores` against right-censored
// outcomes. `events[i]` is nonzero when death was observed.
//
// # Safety
// `scores`, `times` and `events` must each hold `n` elements; `out` must be
// valid.
enum SpStatus survpipe_concordance_index(const double *scores,
                                         const double *times,
                                         const uint8_t *events,
                                         uintptr_t n,
                                         double *out);

// The ten window statistics of one series, in the order mean, sd, max, min,
// diff, first, last, len, minmax, slope. Points outside `[low, high]` are
// ignored; an empty window is an error.
//
// # Safety
// `days` and `values` must hold `n` elements; `out` room for
// `SP_N_DERIVED` doubles.
enum SpStatus survpipe_derive_features(const int64_t *days,
                                       const double *values,
                                       uintptr_t n,
                                       int64_t low,
                                       int64_t high,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SURVPIPE_H */
