#ifndef RTE_INVERSE_H
#define RTE_INVERSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RteStatus {
  RTE_STATUS_OK = 0,
  RTE_STATUS_NULL_POINTER = 1,
  RTE_STATUS_INVALID_ARGUMENT = 2,
  RTE_STATUS_SOLVER_FAILURE = 3,
  RTE_STATUS_BUFFER_TOO_SMALL = 4,
  RTE_STATUS_INTERNAL = 5,
} RteStatus;

typedef enum RteAdjointMode {
  RTE_ADJOINT_MODE_CONTINUOUS = 0,
  RTE_ADJOINT_MODE_ALGEBRAIC = 1,
} RteAdjointMode;

typedef enum RteEndpoint {
  RTE_ENDPOINT_LEFT = 0,
  RTE_ENDPOINT_RIGHT = 1,
} RteEndpoint;

typedef enum RteKind {
  RTE_KIND_ABSORPTION = 0,
  RTE_KIND_SCATTERING_CRITICAL = 1,
  RTE_KIND_SCATTERING_SUBCRITICAL = 2,
} RteKind;

typedef struct RteKernel RteKernel;

/**
 * A transport problem with its factorized solver.
 */
typedef struct RteProblem RteProblem;

typedef struct RteSolution RteSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t rte_last_error_message(char *buf, size_t len);

/**
 * Problem from a preset name (`abs-test`, `sca-critical`, `sca-subcritical`).
 *
 * # Safety
 * `preset` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RteStatus rte_problem_new_preset(size_t n_x,
                                      size_t n_v,
                                      double kn,
                                      const char *preset,
                                      struct RteProblem **out);

/**
 * Problem from two expressions in `x`.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` a valid pointer.
 */
enum RteStatus rte_problem_new_expr(size_t n_x,
                                    size_t n_v,
                                    double kn,
                                    const char *sigma_s,
                                    const char *sigma_a,
                                    struct RteProblem **out);

/**
 * Problem from nodal coefficient arrays of length `n_x`.
 *
 * # Safety
 * `sigma_s` and `sigma_a` must point to `n_x` doubles; `out` must be valid.
 */
enum RteStatus rte_problem_new_nodal(size_t n_x,
                                     size_t n_v,
                                     double kn,
                                     const double *sigma_s,
                                     const double *sigma_a,
                                     struct RteProblem **out);

/**
 * # Safety
 * `p` must be null or a handle from `rte_problem_new_*` not yet freed.
 */
void rte_problem_free(struct RteProblem *p);

/**
 * # Safety
 * `p` must be a live handle; `n_x` and `n_v` valid pointers.
 */
enum RteStatus rte_problem_dims(const struct RteProblem *p, size_t *n_x, size_t *n_v);

/**
 * Forward solve. `left[j]` is the inflow at x = 0 along +mu_j and
 * `right[j]` at x = 1 along -mu_j, mu_j ascending, `m = n_v / 2`.
 *
 * # Safety
 * `p` must be live; `left` and `right` must point to `m` doubles.
 */
enum RteStatus rte_solve_forward(const struct RteProblem *p,
                                 const double *left,
                                 const double *right,
                                 size_t m,
                                 struct RteSolution **out);

/**
 * Adjoint solve with outflow data: `left[j]` weights g(0, -mu_j) and
 * `right[j]` weights g(1, +mu_j).
 *
 * # Safety
 * As for `rte_solve_forward`.
 */
enum RteStatus rte_solve_adjoint(const struct RteProblem *p,
                                 const double *left,
                                 const double *right,
                                 size_t m,
                                 enum RteAdjointMode mode,
                                 struct RteSolution **out);

/**
 * # Safety
 * `s` must be null or a live solution handle.
 */
void rte_solution_free(struct RteSolution *s);

/**
 * Number of values, `n_x * n_v`.
 *
 * # Safety
 * `s` must be null or live.
 */
size_t rte_solution_len(const struct RteSolution *s);

/**
 * Values node-major: entry `i * n_v + j` is f(x_i, v_j), v ascending.
 *
 * # Safety
 * `s` must be live; `buf` must point to `len` writable doubles.
 */
enum RteStatus rte_solution_values(const struct RteSolution *s, double *buf, size_t len);

/**
 * Net flux sum_j w_j v_j f(x_i, v_j) at node `i`.
 *
 * # Safety
 * `s` must be live and `out` valid.
 */
enum RteStatus rte_solution_flux(const struct RteSolution *s, size_t i, double *out);

/**
 * Outgoing measurement at an endpoint.
 *
 * # Safety
 * `s` must be live and `out` valid.
 */
enum RteStatus rte_solution_measure(const struct RteSolution *s, enum RteEndpoint end, double *out);

/**
 * Kernel for the velocity-delta plan (inverse-weight scaling, weights
 * included, algebraic adjoint).
 *
 * # Safety
 * `p` must be live and `out` valid.
 */
enum RteStatus rte_kernel_assemble(const struct RteProblem *p,
                                   enum RteKind kind,
                                   struct RteKernel **out);

/**
 * # Safety
 * `k` must be null or a live kernel handle.
 */
void rte_kernel_free(struct RteKernel *k);

/**
 * # Safety
 * `k` must be live; `rows` and `cols` valid.
 */
enum RteStatus rte_kernel_shape(const struct RteKernel *k, size_t *rows, size_t *cols);

/**
 * Entries row-major; row `p = k * n_sources + d`.
 *
 * # Safety
 * `k` must be live; `buf` must point to `len` writable doubles.
 */
enum RteStatus rte_kernel_entries(const struct RteKernel *k, double *buf, size_t len);

/**
 * Singular values in descending order; `written` receives their count
 * (`min(rows, cols)`).
 *
 * # Safety
 * `k` must be live; `buf` must point to `len` doubles; `written` valid.
 */
enum RteStatus rte_kernel_singular_values(const struct RteKernel *k,
                                          double *buf,
                                          size_t len,
                                          size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTE_INVERSE_H */
