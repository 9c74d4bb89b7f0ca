#ifndef GRIDFLOW_H
#define GRIDFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Number of constraint blocks reported by [`gf_solution_residuals`].
 */
#define GF_BLOCK_COUNT 8

/*
 Result code of every fallible call.
 */
typedef enum GfStatus {
  GF_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  GF_STATUS_NULL_POINTER = 1,
  /*
   A string argument was not valid UTF-8.
   */
  GF_STATUS_INVALID_UTF8 = 2,
  /*
   The problem file could not be read.
   */
  GF_STATUS_IO = 3,
  /*
   The problem text is malformed or inconsistent.
   */
  GF_STATUS_PARSE = 4,
  /*
   The problem could not be discretized.
   */
  GF_STATUS_INVALID = 5,
  /*
   The solver rejected its settings or diverged.
   */
  GF_STATUS_SOLVER = 6,
  /*
   The problem has no complete `pipes` section, or the pipe data is invalid.
   */
  GF_STATUS_POTENTIAL = 7,
  /*
   Potentials requested on a graph that is not a simple tree.
   */
  GF_STATUS_NOT_A_TREE = 8,
  /*
   A caller buffer is too small.
   */
  GF_STATUS_BUFFER_TOO_SMALL = 9,
  /*
   Internal failure; the library state is unaffected.
   */
  GF_STATUS_PANIC = 10,
} GfStatus;

/*
 A parsed and discretized problem.
 */
typedef struct GfProblem GfProblem;

/*
 The result of one solve.
 */
typedef struct GfSolution GfSolution;

/*
 Feasibility audit of a problem.
 */
typedef struct GfCheckReport {
  double gmc_lhs;
  double gmc_rhs;
  bool gmc_balanced;
  /*
   False when the problem has no boundary vertices; the demand fields are then zero.
   */
  bool has_boundary;
  double demand_bound;
  double demand;
  bool demand_feasible;
} GfCheckReport;

/*
 Overrides for [`gf_solve`]; zero fields keep the file's settings.
 */
typedef struct GfSolveOptions {
  size_t max_iters;
  double rel_tol;
} GfSolveOptions;

/*
 Scalar diagnostics of a solution.
 */
typedef struct GfSummary {
  double objective;
  bool infeasible;
  bool converged;
  size_t iterations;
  double primal_change;
  double operator_norm;
  double tau;
  double sigma;
  double wall_time;
} GfSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parses and discretizes a problem from JSON text.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GfStatus gf_problem_from_json(const char *json, struct GfProblem **out);

/*
 Reads, parses and discretizes a problem file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GfStatus gf_problem_from_file(const char *path, struct GfProblem **out);

/*
 Releases a problem; null is ignored.

 # Safety
 `problem` must come from this library and not be used afterwards.
 */
void gf_problem_free(struct GfProblem *problem);

/*
 Number of unknowns of the discretized problem, or 0 for null.

 # Safety
 `problem` must be null or a live handle.
 */
size_t gf_problem_unknowns(const struct GfProblem *problem);

/*
 Number of constraint rows of the discretized problem, or 0 for null.

 # Safety
 `problem` must be null or a live handle.
 */
size_t gf_problem_rows(const struct GfProblem *problem);

/*
 Runs the mass-conservation and demand audits.

 # Safety
 `problem` must be a live handle and `out` a valid pointer.
 */
enum GfStatus gf_check(const struct GfProblem *problem, struct GfCheckReport *out);

/*
 Solves the problem. `options` may be null.

 A run that stops without converging still succeeds; inspect
 [`GfSummary::converged`].

 # Safety
 `problem` must be a live handle, `options` null or valid, `out` valid.
 */
enum GfStatus gf_solve(const struct GfProblem *problem,
                       const struct GfSolveOptions *options,
                       struct GfSolution **out);

/*
 Releases a solution; null is ignored.

 # Safety
 `solution` must come from this library and not be used afterwards.
 */
void gf_solution_free(struct GfSolution *solution);

/*
 # Safety
 `solution` must be a live handle and `out` a valid pointer.
 */
enum GfStatus gf_solution_summary(const struct GfSolution *solution, struct GfSummary *out);

/*
 Copies the final block residuals and tolerances, in block order, into
 two buffers of at least [`GF_BLOCK_COUNT`] entries. `deltas` may be null.

 # Safety
 Non-null buffers must hold `len` writable doubles.
 */
enum GfStatus gf_solution_residuals(const struct GfSolution *solution,
                                    double *residuals,
                                    double *deltas,
                                    size_t len);

/*
 Name of constraint block `index`, or null when out of range. The string is static.
 */
const char *gf_block_name(size_t index);

/*
 Borrows the primal vector. The pointer stays valid until the solution is freed.

 # Safety
 `solution` must be a live handle; `data` and `len` valid pointers.
 */
enum GfStatus gf_solution_primal(const struct GfSolution *solution,
                                 const double **data,
                                 size_t *len);

/*
 Borrows the total discrete mass at every time node.

 # Safety
 As [`gf_solution_primal`].
 */
enum GfStatus gf_solution_mass(const struct GfSolution *solution, const double **data, size_t *len);

/*
 Interface constants from the problem's `pipes` section: `d` gets one
 entry per edge and `phi` one per vertex, in declaration order.

 # Safety
 `problem` must be a live handle; `d` and `phi` must hold `d_len` and
 `phi_len` writable doubles.
 */
enum GfStatus gf_potentials(const struct GfProblem *problem,
                            double *d,
                            size_t d_len,
                            double *phi,
                            size_t phi_len);

/*
 Message of the last failure on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *gf_last_error(void);

/*
 Library version as a static string.
 */
const char *gf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDFLOW_H */
