#ifndef HOMLAB_H
#define HOMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_INPUT = 2,
  HL_STATUS_CAP_EXCEEDED = 3,
  HL_STATUS_NO_APPROXIMATION = 4,
  HL_STATUS_DIMENSION_MISMATCH = 5,
  HL_STATUS_PARSE = 6,
  HL_STATUS_NON_ELLIPTIC = 7,
  HL_STATUS_NO_CONVERGENCE = 8,
  HL_STATUS_UNRESOLVED_SCALE = 9,
  HL_STATUS_BUFFER_TOO_SMALL = 10,
  HL_STATUS_OTHER = 11,
  HL_STATUS_PANIC = 12,
} HlStatus;

/**
 * Opaque multiscale coefficient.
 */
typedef struct HlCoefficient HlCoefficient;

/**
 * Opaque grid field.
 */
typedef struct HlField HlField;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hl_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns its full length in bytes.
 *
 * # Safety
 * `buf` must point to `len` writable bytes or be null with `len == 0`.
 */
size_t hl_last_error(char *buf, size_t len);

/**
 * Simultaneous approximation of `alpha[0..m]` with separation target `big_q`.
 * Writes `q`, the numerators `p[0..m]` and residuals `gamma[0..m]`.
 *
 * # Safety
 * `alpha`, `p` and `gamma` must hold `m` elements; `q` must be writable.
 */
enum HlStatus hl_simultaneous_approx(const double *alpha,
                                     size_t m,
                                     double big_q,
                                     uint64_t cap,
                                     uint64_t *q,
                                     int64_t *p,
                                     double *gamma);

/**
 * Parses a coefficient expression with `n_scales` scales (nonincreasing).
 *
 * # Safety
 * `expr` must be a NUL-terminated string, `scales` must hold `n_scales`
 * values and `out` must be writable.
 */
enum HlStatus hl_coefficient_parse(const char *expr,
                                   size_t dim,
                                   const double *scales,
                                   size_t n_scales,
                                   double lambda,
                                   struct HlCoefficient **out);

/**
 * Releases a coefficient; null is ignored.
 *
 * # Safety
 * `c` must come from this library and not be used afterwards.
 */
void hl_coefficient_free(struct HlCoefficient *c);

/**
 * Spatial dimension, or 0 for a null handle.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
size_t hl_coefficient_dim(const struct HlCoefficient *c);

/**
 * Number of scales, or 0 for a null handle.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
size_t hl_coefficient_num_scales(const struct HlCoefficient *c);

/**
 * Copies the scales into `out[0..len]`.
 *
 * # Safety
 * `c` must be a live handle and `out` must hold `len` values.
 */
enum HlStatus hl_coefficient_scales(const struct HlCoefficient *c, double *out, size_t len);

/**
 * Evaluates the coefficient at `x[0..dim]`; writes the row-major 2x2
 * matrix to `out[0..4]` (only `out[0]` is meaningful in one dimension).
 *
 * # Safety
 * `c` must be a live handle, `x` must hold `dim` values, `out` four.
 */
enum HlStatus hl_coefficient_eval(const struct HlCoefficient *c, const double *x, double *out);

/**
 * Reperiodizes `c` at separation target `big_q`; the rewritten coefficient
 * is stored in `out` and its denominator in `q`.
 *
 * # Safety
 * `c` must be a live handle; `out` and `q` must be writable.
 */
enum HlStatus hl_reperiodize(const struct HlCoefficient *c,
                             double big_q,
                             struct HlCoefficient **out,
                             uint64_t *q);

/**
 * Solves the periodic cell problem for a one-slot kernel `expr` in `y1`
 * and writes the row-major effective matrix to `out[0..4]`.
 *
 * # Safety
 * `expr` must be NUL-terminated and `out` must hold four values.
 */
enum HlStatus hl_cell_solve(const char *expr, size_t dim, size_t cells, double *out);

/**
 * Solves `-div(A grad u) = F` on the unit interval or square with `u = g`
 * on the boundary; `big_f` and `boundary` are expressions in `x` or null
 * for zero. The nodal solution is stored in `out`.
 *
 * # Safety
 * `c` must be a live handle, the strings null or NUL-terminated, and `out`
 * writable.
 */
enum HlStatus hl_solve_dirichlet(const struct HlCoefficient *c,
                                 size_t cells,
                                 const char *big_f,
                                 const char *boundary,
                                 struct HlField **out);

/**
 * Number of stored values (points times components), or 0 for null.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t hl_field_len(const struct HlField *f);

/**
 * Points per axis, or 0 for null.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t hl_field_per_side(const struct HlField *f);

/**
 * Copies the values (axis 0 fastest, components interleaved) into
 * `out[0..len]`.
 *
 * # Safety
 * `f` must be a live handle and `out` must hold `len` values.
 */
enum HlStatus hl_field_values(const struct HlField *f, double *out, size_t len);

/**
 * Releases a field; null is ignored.
 *
 * # Safety
 * `f` must come from this library and not be used afterwards.
 */
void hl_field_free(struct HlField *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMLAB_H */
