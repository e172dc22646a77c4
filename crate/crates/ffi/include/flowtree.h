#ifndef FLOWTREE_H
#define FLOWTREE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FtStatus {
  FT_STATUS_OK = 0,
  FT_STATUS_INVALID_ARGUMENT = 1,
  FT_STATUS_TOO_LARGE = 2,
  FT_STATUS_WINDOW_TOO_SMALL = 3,
  FT_STATUS_FLOW_VIOLATION = 4,
  FT_STATUS_INAPPLICABLE = 5,
  FT_STATUS_EMPTY_WINDOW = 6,
  FT_STATUS_NUMERIC = 7,
  FT_STATUS_PARSE = 8,
  FT_STATUS_IO = 9,
  FT_STATUS_NULL_POINTER = 10,
  FT_STATUS_PANIC = 11,
} FtStatus;

typedef struct FtMeasure FtMeasure;

typedef struct FtTree FtTree;

typedef struct FtWeight FtWeight;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ft_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void ft_string_free(char *s);

/**
 * Slab of the homogeneous tree `T_q` between two levels.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FtStatus ft_tree_homogeneous_slab(uint32_t q,
                                       int64_t level_top,
                                       int64_t level_bot,
                                       struct FtTree **out);

/**
 * Ball of radius `radius` in `T_q`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FtStatus ft_tree_ball(uint32_t q, uint32_t radius, struct FtTree **out);

/**
 * # Safety
 * `tree` must come from a tree constructor and not be used afterwards.
 */
void ft_tree_free(struct FtTree *tree);

/**
 * Number of vertices; 0 for a null handle.
 *
 * # Safety
 * `tree` must be null or a live handle.
 */
size_t ft_tree_len(const struct FtTree *tree);

/**
 * # Safety
 * `tree` must be a live handle and `out` a valid pointer.
 */
enum FtStatus ft_tree_level(const struct FtTree *tree, uint32_t vertex, int64_t *out);

/**
 * The canonical flow `q^{ℓ − level_bot}` (slabs) or `q^ℓ` (balls).
 *
 * # Safety
 * `tree` must be a live handle and `out` a valid pointer.
 */
enum FtStatus ft_measure_canonical(const struct FtTree *tree, struct FtMeasure **out);

/**
 * Flow aggregated upward from `len` bottom values given as rational strings.
 *
 * # Safety
 * `values` must point to `len` NUL-terminated strings.
 */
enum FtStatus ft_measure_from_bottom(const struct FtTree *tree,
                                     const char *const *values,
                                     size_t len,
                                     struct FtMeasure **out);

/**
 * # Safety
 * `m` must come from a measure constructor and not be used afterwards.
 */
void ft_measure_free(struct FtMeasure *m);

/**
 * `μ(vertex)` as an exact `"p/q"` string.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum FtStatus ft_measure_value(const struct FtMeasure *m, uint32_t vertex, char **out);

/**
 * Level weight `W(ℓ) = pattern[ℓ mod len]`.
 *
 * # Safety
 * `pattern` must point to `len` NUL-terminated strings.
 */
enum FtStatus ft_weight_periodic(const struct FtTree *tree,
                                 const char *const *pattern,
                                 size_t len,
                                 struct FtWeight **out);

/**
 * Weight with one value per vertex, in construction order.
 *
 * # Safety
 * `values` must point to `len` NUL-terminated strings.
 */
enum FtStatus ft_weight_from_values(const struct FtTree *tree,
                                    const char *const *values,
                                    size_t len,
                                    struct FtWeight **out);

/**
 * # Safety
 * `w` must come from a weight constructor and not be used afterwards.
 */
void ft_weight_free(struct FtWeight *w);

/**
 * `[w]_{A_p(μ)}` over the full window. The constant lies in `[*out_lo, *out_hi]`
 * (equal bounds when exact). `out_json` may be null; otherwise it receives the report.
 *
 * # Safety
 * Handles must be live, `p` NUL-terminated, `out_lo`/`out_hi` valid.
 */
enum FtStatus ft_ap_constant(const struct FtWeight *w,
                             const struct FtMeasure *m,
                             const char *p,
                             uint32_t beta,
                             bool exact,
                             double *out_lo,
                             double *out_hi,
                             char **out_json);

/**
 * `[w]_{A_1(μ)}` over the full window; outputs as in [`ft_ap_constant`].
 *
 * # Safety
 * Handles must be live, `out_lo`/`out_hi` valid.
 */
enum FtStatus ft_a1_constant(const struct FtWeight *w,
                             const struct FtMeasure *m,
                             uint32_t beta,
                             double *out_lo,
                             double *out_hi,
                             char **out_json);

/**
 * Runs a scenario given as JSON text. `out_report` may be null.
 *
 * # Safety
 * `json` must be NUL-terminated and `out_passed` valid.
 */
enum FtStatus ft_run_scenario(const char *json, bool *out_passed, char **out_report);

/**
 * The full property battery at the given depth. `out_report` may be null.
 *
 * # Safety
 * `out_passed` must be valid.
 */
enum FtStatus ft_verify(uint32_t depth, bool *out_passed, char **out_report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWTREE_H */
