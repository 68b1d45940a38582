#ifndef JIGSAW_H
#define JIGSAW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum JigsawStatus {
  JIGSAW_STATUS_OK = 0,
  JIGSAW_STATUS_NULL_POINTER = 1,
  JIGSAW_STATUS_INVALID_ARGUMENT = 2,
  JIGSAW_STATUS_SIZE_MISMATCH = 3,
  JIGSAW_STATUS_BUFFER_TOO_SMALL = 4,
  JIGSAW_STATUS_IO = 5,
  JIGSAW_STATUS_FORMAT = 6,
  JIGSAW_STATUS_NUMERIC = 7,
  JIGSAW_STATUS_SOURCE_UNAVAILABLE = 8,
  JIGSAW_STATUS_PANIC = 99,
} JigsawStatus;

/**
 * A shuffled puzzle.
 */
typedef struct JigsawPuzzle JigsawPuzzle;

/**
 * Trained matcher embedding weights.
 */
typedef struct JigsawWeights JigsawWeights;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *jigsaw_last_error(void);

/**
 * Library version, a static string.
 */
const char *jigsaw_version(void);

/**
 * Loads a puzzle directory written by `jigsaw generate`.
 *
 * # Safety
 * `dir` is a NUL-terminated path; `out` is a valid pointer.
 */
enum JigsawStatus jigsaw_puzzle_load(const char *dir, struct JigsawPuzzle **out);

/**
 * Cuts an interleaved 8-bit RGB image (`height * width * 3` bytes) into a
 * `rows x cols` puzzle shuffled with `seed`. The image is kept as the
 * puzzle's source, so the oracle mental image is available.
 *
 * # Safety
 * `pixels` is valid for `height * width * 3` reads; `out` is a valid pointer.
 */
enum JigsawStatus jigsaw_puzzle_from_rgb(const uint8_t *pixels,
                                         size_t height,
                                         size_t width,
                                         size_t rows,
                                         size_t cols,
                                         uint64_t seed,
                                         struct JigsawPuzzle **out);

/**
 * # Safety
 * `puzzle` is null or a handle from this library not yet freed.
 */
void jigsaw_puzzle_free(struct JigsawPuzzle *puzzle);

/**
 * Number of pieces, 0 for a null handle.
 *
 * # Safety
 * `puzzle` is null or a live handle.
 */
size_t jigsaw_puzzle_len(const struct JigsawPuzzle *puzzle);

/**
 * # Safety
 * `puzzle` is a live handle; `rows` and `cols` are valid pointers.
 */
enum JigsawStatus jigsaw_puzzle_grid(const struct JigsawPuzzle *puzzle, size_t *rows, size_t *cols);

/**
 * Writes the ground-truth permutation.
 *
 * # Safety
 * `puzzle` is a live handle; `out` is valid for `len` writes.
 */
enum JigsawStatus jigsaw_puzzle_ground_truth(const struct JigsawPuzzle *puzzle,
                                             size_t *out,
                                             size_t len);

/**
 * Loads matcher weights saved by `jigsaw train`.
 *
 * # Safety
 * `path` is a NUL-terminated path; `out` is a valid pointer.
 */
enum JigsawStatus jigsaw_weights_load(const char *path, struct JigsawWeights **out);

/**
 * # Safety
 * `weights` is null or a handle from this library not yet freed.
 */
void jigsaw_weights_free(struct JigsawWeights *weights);

/**
 * Solves with the matcher against the oracle mental image blurred by
 * `blur_radius` (0 for the exact source). `weights` may be null, in which
 * case raw pixels are compared. `tau` is the Sinkhorn temperature.
 *
 * # Safety
 * `puzzle` is a live handle; `weights` is null or live; `out` is valid for
 * `len` writes.
 */
enum JigsawStatus jigsaw_solve_matcher(const struct JigsawPuzzle *puzzle,
                                       const struct JigsawWeights *weights,
                                       double blur_radius,
                                       double tau,
                                       size_t *out,
                                       size_t len);

/**
 * Solves with the greedy boundary-compatibility baseline.
 *
 * # Safety
 * `puzzle` is a live handle; `out` is valid for `len` writes.
 */
enum JigsawStatus jigsaw_solve_greedy(const struct JigsawPuzzle *puzzle, size_t *out, size_t len);

/**
 * Sinkhorn normalization of `exp(c)` for a row-major `n x n` matrix;
 * writes the doubly stochastic result to `out` (`n * n` entries).
 *
 * # Safety
 * `c` is valid for `n * n` reads and `out` for `n * n` writes.
 */
enum JigsawStatus jigsaw_sinkhorn(const double *c,
                                  size_t n,
                                  size_t max_iters,
                                  double tol,
                                  double *out);

/**
 * Optimal assignment of a row-major `n x n` score matrix; `out[i]` is the
 * column of row `i`.
 *
 * # Safety
 * `m` is valid for `n * n` reads and `out` for `n` writes.
 */
enum JigsawStatus jigsaw_hungarian(const double *m, size_t n, bool maximize, size_t *out);

/**
 * Fraction of pieces whose predicted slot matches the ground truth.
 *
 * # Safety
 * `pred` and `gt` are valid for `n` reads; `out` is a valid pointer.
 */
enum JigsawStatus jigsaw_direct_accuracy(const size_t *pred,
                                         const size_t *gt,
                                         size_t n,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JIGSAW_H */
