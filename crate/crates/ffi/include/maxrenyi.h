#ifndef MAXRENYI_H
#define MAXRENYI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MrStatus {
  MR_STATUS_OK = 0,
  MR_STATUS_NULL_POINTER = 1,
  MR_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A model or policy failed validation.
   */
  MR_STATUS_VALIDATION = 3,
  MR_STATUS_SINGULAR = 4,
  MR_STATUS_UNSUPPORTED = 5,
  MR_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  MR_STATUS_PANIC = 7,
} MrStatus;

typedef enum MrSolverMethod {
  MR_SOLVER_METHOD_GRADIENT_ASCENT = 0,
  MR_SOLVER_METHOD_FRANK_WOLFE = 1,
} MrSolverMethod;

/**
 * Discounted controlled Markov process.
 */
typedef struct MrCmp MrCmp;

/**
 * Stationary tabular policy.
 */
typedef struct MrPolicy MrPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next `mr_*` call on the same thread.
 */
const char *mr_last_error(void);

/**
 * # Safety
 * `transition` must hold `n_states * n_actions * n_states` values and
 * `init` `n_states` values; `out` must be writable.
 */
enum MrStatus mr_cmp_new(size_t n_states,
                         size_t n_actions,
                         const double *transition,
                         const double *init,
                         double gamma,
                         struct MrCmp **out);

/**
 * Parses a discounted model JSON document.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum MrStatus mr_cmp_from_json(const char *json, struct MrCmp **out);

/**
 * Built-in environment by name (`five-state`, `two-state-gap`, `four-rooms`,
 * `random`, `symmetric`) with the given discount.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
enum MrStatus mr_cmp_builtin(const char *name, double gamma, struct MrCmp **out);

/**
 * # Safety
 * `cmp` must be NULL or a handle from this library not yet freed.
 */
void mr_cmp_free(struct MrCmp *cmp);

/**
 * Zero for a NULL handle.
 *
 * # Safety
 * `cmp` must be NULL or a live handle.
 */
size_t mr_cmp_n_states(const struct MrCmp *cmp);

/**
 * # Safety
 * `cmp` must be NULL or a live handle.
 */
size_t mr_cmp_n_actions(const struct MrCmp *cmp);

/**
 * # Safety
 * `probs` must hold `n_states * n_actions` values; `out` must be writable.
 */
enum MrStatus mr_policy_from_probs(size_t n_states,
                                   size_t n_actions,
                                   const double *probs,
                                   struct MrPolicy **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum MrStatus mr_policy_uniform(size_t n_states, size_t n_actions, struct MrPolicy **out);

/**
 * # Safety
 * `policy` must be NULL or a handle from this library not yet freed.
 */
void mr_policy_free(struct MrPolicy *policy);

/**
 * Copies the action probabilities into `out` (`len >= n_states * n_actions`).
 *
 * # Safety
 * `policy` must be a live handle and `out` writable for `len` values.
 */
enum MrStatus mr_policy_probs(const struct MrPolicy *policy, double *out, size_t len);

/**
 * Normalized discounted state-action occupancy, `n_states * n_actions`
 * values.
 *
 * # Safety
 * Handles must be live; `out` writable for `len` values.
 */
enum MrStatus mr_occupancy(const struct MrCmp *cmp,
                           const struct MrPolicy *policy,
                           double *out,
                           size_t len);

/**
 * Rényi entropy of order `alpha` in `[0, 1]` (1 gives Shannon) in nats.
 *
 * # Safety
 * `d` must hold `len` values; `out` must be writable.
 */
enum MrStatus mr_renyi_entropy(const double *d, size_t len, double alpha, double *out);

/**
 * Expected draws to see every cell; `+inf` when a cell is zero.
 *
 * # Safety
 * `d` must hold `len` values; `out` must be writable.
 */
enum MrStatus mr_coupon_value(const double *d, size_t len, double *out);

/**
 * Maximises the occupancy entropy of order `alpha`. `method` is an
 * `MrSolverMethod` value. Writes a new policy handle and, when `value` is
 * non-NULL, the attained entropy.
 *
 * # Safety
 * `cmp` must be live; `out` writable; `value` NULL or writable.
 */
enum MrStatus mr_maximize_entropy(const struct MrCmp *cmp,
                                  double alpha,
                                  uint32_t method,
                                  uint64_t seed,
                                  struct MrPolicy **out,
                                  double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAXRENYI_H */
