#ifndef RECOURSE_H
#define RECOURSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `RC_OK` is zero.
 */
typedef enum rc_status {
  RC_OK = 0,
  RC_NULL_POINTER = 1,
  RC_INVALID_INPUT = 2,
  RC_DIMENSION = 3,
  RC_ASSUMPTION = 4,
  RC_INFEASIBLE = 5,
  RC_UNBOUNDED = 6,
  RC_NON_CONVERGENCE = 7,
  RC_NUMERIC = 8,
  RC_BUFFER_TOO_SMALL = 9,
  RC_PANIC = 10,
} rc_status;

typedef enum rc_risk_kind {
  RC_EXPECTATION = 0,
  RC_EXPECTED_EXCESS = 1,
  RC_UPPER_SEMIDEVIATION = 2,
} rc_risk_kind;

/**
 * Dual vertices of a recourse matrix.
 */
typedef struct rc_fan rc_fan;

/**
 * A probability measure prepared for integration.
 */
typedef struct rc_measure rc_measure;

/**
 * A parsed two-stage problem.
 */
typedef struct rc_problem rc_problem;

/**
 * Risk functional selector. `kind` takes an `rc_risk_kind` value; `eta`
 * is read only for the expected excess.
 */
typedef struct rc_risk {
  uint32_t kind;
  double eta;
} rc_risk;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty after a success).
 * The pointer stays valid until the next `rc_*` call on the same thread.
 */
const char *rc_last_error_message(void);

/**
 * Enumerates the dual vertices of `W` (`s × m`, row-major) and `q` (length `m`).
 *
 * # Safety
 * `w` must hold `s*m` values, `q` must hold `m`, `out` must be writable.
 */
enum rc_status rc_fan_new(const double *w,
                          size_t s,
                          size_t m,
                          const double *q,
                          struct rc_fan **out);

/**
 * # Safety
 * `fan` must be null or a handle from [`rc_fan_new`] not yet freed.
 */
void rc_fan_free(struct rc_fan *fan);

/**
 * # Safety
 * `fan` must be a live handle; `out` must be writable.
 */
enum rc_status rc_fan_num_vertices(const struct rc_fan *fan, size_t *out);

/**
 * # Safety
 * `fan` must be a live handle; `out` must be writable.
 */
enum rc_status rc_fan_dim(const struct rc_fan *fan, size_t *out);

/**
 * Copies vertex `i` into `out` (capacity `cap`).
 *
 * # Safety
 * `fan` must be a live handle; `out` must have room for `cap` values.
 */
enum rc_status rc_fan_vertex(const struct rc_fan *fan, size_t i, double *out, size_t cap);

/**
 * `φ(t) = max_i d_iᵀt`.
 *
 * # Safety
 * `fan` must be a live handle; `t` must hold `len` values; `out` writable.
 */
enum rc_status rc_fan_phi(const struct rc_fan *fan, const double *t, size_t len, double *out);

/**
 * Discrete measure with `n` atoms in dimension `dim` (atoms row-major).
 *
 * # Safety
 * `atoms` must hold `n*dim` values, `weights` `n`; `out` writable.
 */
enum rc_status rc_measure_discrete(const double *atoms,
                                   const double *weights,
                                   size_t n,
                                   size_t dim,
                                   struct rc_measure **out);

/**
 * Uniform density on the box `[lo, hi]`. `resolution` cells per axis are
 * used for integration; `0` requests exact integration (dimension 1 only).
 *
 * # Safety
 * `lo` and `hi` must hold `dim` values; `out` writable.
 */
enum rc_status rc_measure_uniform_box(const double *lo,
                                      const double *hi,
                                      size_t dim,
                                      size_t resolution,
                                      struct rc_measure **out);

/**
 * # Safety
 * `m` must be null or a live measure handle.
 */
void rc_measure_free(struct rc_measure *m);

/**
 * Value of the selected risk functional at `x` (length `len`).
 *
 * # Safety
 * Handles must be live; `x` must hold `len` values; `out` writable.
 */
enum rc_status rc_eval_q(const struct rc_fan *fan,
                         const struct rc_measure *measure,
                         struct rc_risk risk,
                         const double *x,
                         size_t len,
                         double *out);

/**
 * Gradient of the selected risk functional at `x`, written to `grad` (length `len`).
 *
 * # Safety
 * Handles must be live; `x` and `grad` must hold `len` values.
 */
enum rc_status rc_grad_q(const struct rc_fan *fan,
                         const struct rc_measure *measure,
                         struct rc_risk risk,
                         const double *x,
                         size_t len,
                         double *grad);

/**
 * L1-Wasserstein distance between two discrete measures.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum rc_status rc_wasserstein1(const struct rc_measure *a, const struct rc_measure *b, double *out);

/**
 * Parses a two-stage problem from a NUL-terminated JSON string.
 *
 * # Safety
 * `json` must be a valid C string; `out` writable.
 */
enum rc_status rc_problem_from_json(const char *json, struct rc_problem **out);

/**
 * # Safety
 * `p` must be null or a live problem handle.
 */
void rc_problem_free(struct rc_problem *p);

/**
 * Number of first-stage variables.
 *
 * # Safety
 * `p` must be a live handle; `out` writable.
 */
enum rc_status rc_problem_num_vars(const struct rc_problem *p, size_t *out);

/**
 * Solves the problem. `tol` is the gap target of the subgradient path
 * (`<= 0` selects the default); `resolution` is used for box densities
 * (`0` for none). The minimizer goes to `x` (capacity `cap`).
 *
 * # Safety
 * `p` must be a live handle; `x` must have room for `cap` values; `value` writable.
 */
enum rc_status rc_problem_solve(const struct rc_problem *p,
                                double tol,
                                size_t resolution,
                                double *x,
                                size_t cap,
                                double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECOURSE_H */
