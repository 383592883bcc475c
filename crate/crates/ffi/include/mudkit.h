#ifndef MUDKIT_H
#define MUDKIT_H

#include <stddef.h>
#include <stdint.h>

typedef enum MudkitStatus {
  MUDKIT_STATUS_OK = 0,
  MUDKIT_STATUS_NULL_POINTER = 1,
  MUDKIT_STATUS_INVALID_ARGUMENT = 2,
  MUDKIT_STATUS_DIMENSION_MISMATCH = 3,
  /*
   Not SPD, singular factor, rank deficient or an iteration limit.
   */
  MUDKIT_STATUS_NUMERICAL = 4,
  MUDKIT_STATUS_PANIC = 5,
} MudkitStatus;

/*
 Opaque matrix handle. Create with `mudkit_matrix_new` or
 `mudkit_matrix_from_data`, release with `mudkit_matrix_free`.
 */
typedef struct MudkitMatrix MudkitMatrix;

/*
 Optional diagnostics filled in by the whitening calls.
 */
typedef struct MudkitWhitenStats {
  /*
   `‖QQᵀ - I‖_F` along the smaller dimension.
   */
  double ortho_residual;
  /*
   Multiply-add count times two, excluding reductions.
   */
  uint64_t flops;
  double wall_seconds;
} MudkitWhitenStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or an empty string.
 The pointer stays valid until the next mudkit call on this thread.
 */
const char *mudkit_last_error_message(void);

/*
 Library version as a static nul-terminated string.
 */
const char *mudkit_version(void);

/*
 Zero matrix of the given shape. Both dimensions must be positive.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum MudkitStatus mudkit_matrix_new(size_t rows, size_t cols, struct MudkitMatrix **out);

/*
 Matrix copied from `len = rows * cols` row-major values.

 # Safety
 `data` must point to `len` readable doubles and `out` to writable
 storage for one handle.
 */
enum MudkitStatus mudkit_matrix_from_data(size_t rows,
                                          size_t cols,
                                          const double *data,
                                          size_t len,
                                          struct MudkitMatrix **out);

/*
 Release a handle. Null is ignored.

 # Safety
 `m` must be null or a handle from this library that has not been freed.
 */
void mudkit_matrix_free(struct MudkitMatrix *m);

/*
 Row count, or 0 for a null handle.

 # Safety
 `m` must be null or a live handle.
 */
size_t mudkit_matrix_rows(const struct MudkitMatrix *m);

/*
 Column count, or 0 for a null handle.

 # Safety
 `m` must be null or a live handle.
 */
size_t mudkit_matrix_cols(const struct MudkitMatrix *m);

/*
 Copy the row-major values into `dst`, which must hold exactly
 `rows * cols` doubles.

 # Safety
 `m` must be a live handle and `dst` must point to `len` writable doubles.
 */
enum MudkitStatus mudkit_matrix_copy_data(const struct MudkitMatrix *m, double *dst, size_t len);

/*
 MUD whitening with `passes` rounds and row-norm floor `eps`.

 # Safety
 `m` must be a live handle, `out` writable, `stats` null or writable.
 */
enum MudkitStatus mudkit_whiten_mud(const struct MudkitMatrix *m,
                                    size_t passes,
                                    double eps,
                                    struct MudkitMatrix **out,
                                    struct MudkitWhitenStats *stats);

/*
 Muon Newton-Schulz orthogonalization with `iters` quintic steps.

 # Safety
 `m` must be a live handle, `out` writable, `stats` null or writable.
 */
enum MudkitStatus mudkit_whiten_muon(const struct MudkitMatrix *m,
                                     size_t iters,
                                     struct MudkitMatrix **out,
                                     struct MudkitWhitenStats *stats);

/*
 Exact polar factor from a thin SVD. Fails on rank-deficient input.

 # Safety
 `m` must be a live handle, `out` writable, `stats` null or writable.
 */
enum MudkitStatus mudkit_whiten_polar(const struct MudkitMatrix *m,
                                      struct MudkitMatrix **out,
                                      struct MudkitWhitenStats *stats);

/*
 CholeskyQR whitening. Fails when the Gram matrix is not numerically SPD.

 # Safety
 `m` must be a live handle, `out` writable, `stats` null or writable.
 */
enum MudkitStatus mudkit_whiten_cholqr(const struct MudkitMatrix *m,
                                       struct MudkitMatrix **out,
                                       struct MudkitWhitenStats *stats);

/*
 One step of the MUD map on a unit-diagonal SPD Gram matrix.

 # Safety
 `g` must be a live handle and `out` writable.
 */
enum MudkitStatus mudkit_gram_map(const struct MudkitMatrix *g, struct MudkitMatrix **out);

/*
 `‖QQᵀ - I‖_F` along the smaller dimension of `m`.

 # Safety
 `m` must be a live handle and `out` must point to a writable double.
 */
enum MudkitStatus mudkit_ortho_residual(const struct MudkitMatrix *m, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MUDKIT_H */
