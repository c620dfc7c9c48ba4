#ifndef MMOT_H
#define MMOT_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmotStatus {
  MMOT_STATUS_OK = 0,
  MMOT_STATUS_NULL_POINTER = 1,
  MMOT_STATUS_INVALID_ARGUMENT = 2,
  MMOT_STATUS_INFEASIBLE = 3,
  MMOT_STATUS_BUFFER_TOO_SMALL = 4,
  MMOT_STATUS_VERIFICATION_FAILED = 5,
  MMOT_STATUS_INTERNAL = 6,
} MmotStatus;

/**
 * Cost function.
 */
typedef struct MmotCost MmotCost;

/**
 * Optimal coupling with its potentials and the grid it was solved on.
 */
typedef struct MmotSolution MmotSolution;

/**
 * Grid of discrete marginals.
 */
typedef struct MmotSpace MmotSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *mmot_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mmot_version(void);

/**
 * Builds a grid of `n_axes` one-dimensional marginals. Axis `i` has
 * `sizes[i]` points; `points` and `weights` hold all axes back to back.
 *
 * # Safety
 * `sizes` must hold `n_axes` entries, `points` and `weights` the sum of
 * `sizes` entries each, and `out` must be writable.
 */
enum MmotStatus mmot_space_new_1d(size_t n_axes,
                                  const size_t *sizes,
                                  const double *points,
                                  const double *weights,
                                  struct MmotSpace **out_space);

/**
 * Number of axes, or 0 for a null handle.
 *
 * # Safety
 * `space` must be null or a live handle.
 */
size_t mmot_space_num_axes(const struct MmotSpace *space);

/**
 * # Safety
 * `space` must be null or a handle not yet freed.
 */
void mmot_space_free(struct MmotSpace *space);

/**
 * One of `coulomb1d`, `expcos`, `xyz`, `twowell`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out_cost` writable.
 */
enum MmotStatus mmot_cost_builtin(const char *name, struct MmotCost **out_cost);

/**
 * Cost given by its value on every cell of `space` in lexicographic order.
 * `+INFINITY` forbids a cell.
 *
 * # Safety
 * `values` must hold `len` entries and `out_cost` must be writable.
 */
enum MmotStatus mmot_cost_tabulated(const struct MmotSpace *space,
                                    const double *values,
                                    size_t len,
                                    struct MmotCost **out_cost);

/**
 * # Safety
 * `cost` must be null or a handle not yet freed.
 */
void mmot_cost_free(struct MmotCost *cost);

/**
 * Solves the transport problem exactly and certifies the result.
 *
 * # Safety
 * `space` and `cost` must be live handles and `out_solution` writable.
 */
enum MmotStatus mmot_solve(const struct MmotSpace *space,
                           const struct MmotCost *cost,
                           struct MmotSolution **out_solution);

/**
 * Primal and dual optimal values.
 *
 * # Safety
 * `solution` must be a live handle; output pointers must be writable.
 */
enum MmotStatus mmot_solution_values(const struct MmotSolution *solution,
                                     double *primal,
                                     double *dual);

/**
 * Number of cells with positive mass.
 *
 * # Safety
 * `solution` must be a live handle and `len` writable.
 */
enum MmotStatus mmot_solution_support_len(const struct MmotSolution *solution, size_t *len);

/**
 * Copies the support: `cells` receives `n_axes` indices per cell, row by
 * row, and `masses` one value per cell. `capacity` counts cells.
 *
 * # Safety
 * `cells` must hold `capacity * n_axes` entries and `masses` `capacity`.
 */
enum MmotStatus mmot_solution_support(const struct MmotSolution *solution,
                                      size_t *cells,
                                      double *masses,
                                      size_t capacity);

/**
 * Potentials of one axis; `capacity` must be at least the axis size.
 *
 * # Safety
 * `values` must hold `capacity` entries.
 */
enum MmotStatus mmot_solution_potentials(const struct MmotSolution *solution,
                                         size_t axis,
                                         double *values,
                                         size_t capacity);

/**
 * Largest number of graphs over the first axis needed to describe the plan.
 *
 * # Safety
 * `solution` must be a live handle and `k` writable.
 */
enum MmotStatus mmot_solution_graph_count(const struct MmotSolution *solution, size_t *k);

/**
 * Whether the plan is a vertex of its transport polytope.
 *
 * # Safety
 * `solution` must be a live handle and `extremal` writable.
 */
enum MmotStatus mmot_solution_is_extremal(const struct MmotSolution *solution, bool *extremal);

/**
 * The plan in the coupling JSON format. Release with [`mmot_string_free`].
 *
 * # Safety
 * `solution` must be a live handle and `json` writable.
 */
enum MmotStatus mmot_solution_to_json(const struct MmotSolution *solution, char **json);

/**
 * # Safety
 * `solution` must be null or a handle not yet freed.
 */
void mmot_solution_free(struct MmotSolution *solution);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void mmot_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMOT_H */
