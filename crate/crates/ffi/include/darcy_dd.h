#ifndef DARCY_DD_H
#define DARCY_DD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the non-zero values match the command-line exit codes.
 */
typedef enum DarcyStatus {
  DARCY_STATUS_OK = 0,
  DARCY_STATUS_NULL_POINTER = 1,
  DARCY_STATUS_INVALID_ARGUMENT = 2,
  DARCY_STATUS_OUT_OF_MEMORY = 3,
  DARCY_STATUS_SOLVER_FAILURE = 4,
  DARCY_STATUS_DATA_ERROR = 5,
  DARCY_STATUS_IO_ERROR = 6,
  DARCY_STATUS_PANIC = 7,
} DarcyStatus;

typedef enum DarcyFormulation {
  DARCY_FORMULATION_CONTINUOUS = 0,
  DARCY_FORMULATION_DOMAIN_DECOMPOSITION = 1,
} DarcyFormulation;

/**
 * Opaque problem handle.
 */
typedef struct DarcyProblemHandle DarcyProblemHandle;

/**
 * Opaque solution handle.
 */
typedef struct DarcySolutionHandle DarcySolutionHandle;

/**
 * Size and timing summary of a solve.
 */
typedef struct DarcyReport {
  uint64_t dof_u;
  uint64_t dof_p;
  uint64_t dof_lambda;
  uint64_t stored_entries;
  double total_seconds;
  /**
   * Largest absolute divergence-constraint residual.
   */
  double divergence_residual;
} DarcyReport;

/**
 * Error norms of a solution against the exact solution of its problem.
 */
typedef struct DarcyErrors {
  double h;
  double l2_div_residual;
  double hdiv_u_error;
  double h1_p_error;
} DarcyErrors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates the manufactured problem of order `order` on `k³` deformed
 * elements split into `k1³` subdomains. `k1 = 0` selects the default split.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DarcyStatus darcy_manufactured_new(uint32_t order,
                                        uint32_t k,
                                        uint32_t k1,
                                        struct DarcyProblemHandle **out);

/**
 * Releases a problem handle. Null is ignored.
 *
 * # Safety
 * `problem` must be null or a handle from `darcy_manufactured_new` that has
 * not been freed.
 */
void darcy_problem_free(struct DarcyProblemHandle *problem);

/**
 * Solves a problem. `mem_budget = 0` selects the default budget of stored
 * matrix entries.
 *
 * # Safety
 * `problem` must be a live problem handle and `out` valid for one write.
 */
enum DarcyStatus darcy_solve(const struct DarcyProblemHandle *problem,
                             enum DarcyFormulation formulation,
                             uint64_t mem_budget,
                             struct DarcySolutionHandle **out);

/**
 * Releases a solution handle. Null is ignored.
 *
 * # Safety
 * `solution` must be null or a handle from `darcy_solve` that has not been
 * freed.
 */
void darcy_solution_free(struct DarcySolutionHandle *solution);

/**
 * Fills `out` with the size and timing summary of a solution.
 *
 * # Safety
 * `solution` must be a live solution handle and `out` valid for one write.
 */
enum DarcyStatus darcy_solution_report(const struct DarcySolutionHandle *solution,
                                       struct DarcyReport *out);

/**
 * Computes error norms of `solution` against the exact solution of
 * `problem`, which must be the problem it was solved from.
 *
 * # Safety
 * Both handles must be live and `out` valid for one write.
 */
enum DarcyStatus darcy_solution_errors(const struct DarcyProblemHandle *problem,
                                       const struct DarcySolutionHandle *solution,
                                       struct DarcyErrors *out);

/**
 * Copies the last error message of the calling thread into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length without the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes of writes.
 */
size_t darcy_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *darcy_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DARCY_DD_H */
