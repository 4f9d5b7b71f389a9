#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum BkStatus {
  BK_STATUS_OK = 0,
  BK_STATUS_INVALID_ARGUMENT = 1,
  BK_STATUS_INCOMPATIBLE_SKETCHES = 2,
  BK_STATUS_PARSE = 3,
  BK_STATUS_IO = 4,
  BK_STATUS_NULL_POINTER = 5,
  BK_STATUS_PANIC = 6,
} BkStatus;

// A robust estimator together with its noise stream and, for the tracking
// variant, its charge ledger.
typedef struct BkEstimator BkEstimator;

// Keyed priority function over a universe `[0, n)`.
typedef struct BkRandomness BkRandomness;

// A bottom-k sketch.
typedef struct BkSketch BkSketch;

// A cardinality answer. `deactivated` is -1 unless the tracking estimator
// produced it.
typedef struct BkEstimate {
  double value;
  bool exact;
  bool saturated;
  int64_t deactivated;
} BkEstimate;

typedef struct BkPrivacyBounds {
  double pure_epsilon;
  double pure_delta;
  double approx_epsilon;
  double approx_delta;
  double q;
  double delta_star;
} BkPrivacyBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *bk_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void bk_string_free(char *s);

// # Safety
// `out` must be a valid pointer.
enum BkStatus bk_randomness_new(uint64_t seed, uint64_t n, struct BkRandomness **out);

// # Safety
// `r` must be NULL or a live handle from [`bk_randomness_new`].
void bk_randomness_free(struct BkRandomness *r);

// # Safety
// `r` must be a live handle and `out` a valid pointer.
enum BkStatus bk_randomness_priority(const struct BkRandomness *r, uint64_t key, double *out);

// Sketch of the set of `len` key ids at `keys`; duplicates are ignored.
//
// # Safety
// `r` must be a live handle, `keys` must point to `len` readable ids (or be
// NULL with `len == 0`), and `out` must be a valid pointer.
enum BkStatus bk_sketch_from_keys(const struct BkRandomness *r,
                                  const uint64_t *keys,
                                  size_t len,
                                  size_t k,
                                  struct BkSketch **out);

// # Safety
// `a` and `b` must be live handles and `out` a valid pointer.
enum BkStatus bk_sketch_merge(const struct BkSketch *a,
                              const struct BkSketch *b,
                              struct BkSketch **out);

// Number of entries, or 0 for NULL.
//
// # Safety
// `s` must be NULL or a live handle.
size_t bk_sketch_len(const struct BkSketch *s);

// # Safety
// `s` must be a live handle and `out` a valid pointer.
enum BkStatus bk_sketch_std_estimate(const struct BkSketch *s, struct BkEstimate *out);

// # Safety
// `s` must be a live handle and `out` a valid pointer. The string written
// to `out` is released with [`bk_string_free`].
enum BkStatus bk_sketch_to_json(const struct BkSketch *s, char **out);

// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum BkStatus bk_sketch_from_json(const char *json, struct BkSketch **out);

// # Safety
// `s` must be NULL or a live handle.
void bk_sketch_free(struct BkSketch *s);

// Robust estimator from an estimator config JSON object with fields `k`,
// `r`, `n`, `alpha`, `beta` and optional `variant`, `seed`, `k_constant`,
// `noise`.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum BkStatus bk_estimator_new(const char *config_json, struct BkEstimator **out);

// Answers one query; the tracking variant also updates its ledger.
//
// # Safety
// `e` and `s` must be live handles, not used concurrently, and `out` a
// valid pointer.
enum BkStatus bk_estimator_query(struct BkEstimator *e,
                                 const struct BkSketch *s,
                                 struct BkEstimate *out);

// Charge ledger of a tracking estimator as JSON.
//
// # Safety
// `e` must be a live handle and `out` a valid pointer. The string written
// to `out` is released with [`bk_string_free`].
enum BkStatus bk_estimator_ledger_json(const struct BkEstimator *e, char **out);

// # Safety
// `e` must be NULL or a live handle.
void bk_estimator_free(struct BkEstimator *e);

// # Safety
// `out` must be a valid pointer.
enum BkStatus bk_privacy_bounds(uint32_t r,
                                double epsilon,
                                double alpha,
                                double delta,
                                struct BkPrivacyBounds *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
