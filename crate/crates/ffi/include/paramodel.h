#ifndef PARAMODEL_H
#define PARAMODEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmDecayClock {
  /**
   * Initialization decays with simulated time `k * dt`.
   */
  PM_DECAY_CLOCK_TIME = 0,
  /**
   * Initialization decays with the iteration index `k`.
   */
  PM_DECAY_CLOCK_INDEX = 1,
} PmDecayClock;

typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_NOT_CONVERGED = 1,
  PM_STATUS_CONFIG = 2,
  PM_STATUS_DIVERGENCE = 3,
  PM_STATUS_IO = 4,
  PM_STATUS_NULL_POINTER = 5,
  PM_STATUS_INVALID_ARGUMENT = 6,
  PM_STATUS_PANIC = 7,
} PmStatus;

typedef struct PmLinSolver PmLinSolver;

typedef struct PmTrainer PmTrainer;

typedef struct PmControllerParams {
  double kp;
  double ki;
  double k_alpha;
  double k_beta;
  double dt;
  /**
   * One of the `PM_DECAY_CLOCK_*` values.
   */
  uint32_t decay_clock;
} PmControllerParams;

typedef struct PmControllerState {
  double psi;
  double integral;
  uint64_t k;
  double last_y;
} PmControllerState;

/**
 * Scalar part of one training iteration.
 */
typedef struct PmStep {
  uint64_t k;
  double t;
  double y;
  double y_ref;
} PmStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *pm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pm_version(void);

/**
 * # Safety
 * `params` must point to a readable `PmControllerParams` and `out` to a
 * writable `PmControllerState`.
 */
enum PmStatus pm_controller_new(const struct PmControllerParams *params,
                                double psi0,
                                double y0,
                                struct PmControllerState *out);

/**
 * One controller update. `state` is read, then `out_state` and `out_u` are
 * written; `out_state` may alias `state`.
 *
 * # Safety
 * All pointers must be valid for the reads and writes described above.
 */
enum PmStatus pm_controller_step(const struct PmControllerParams *params,
                                 const struct PmControllerState *state,
                                 double y_ref,
                                 double y_meas,
                                 struct PmControllerState *out_state,
                                 double *out_u);

/**
 * One RK4 step of `tau * dx/dt = input - x` from `state`.
 *
 * # Safety
 * `out` must point to a writable `double`.
 */
enum PmStatus pm_filter_step(double tau, double state, double input, double dt, double *out);

/**
 * Creates a trainer for a built-in scenario (`fig4` .. `fig7`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum PmStatus pm_trainer_new_builtin(const char *name, struct PmTrainer **out);

/**
 * Creates a trainer from configuration file text (TOML, `mode = "train"`).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum PmStatus pm_trainer_new_from_config(const char *text, struct PmTrainer **out);

/**
 * # Safety
 * `trainer` must be null or a handle from `pm_trainer_new_*` not yet freed.
 */
void pm_trainer_free(struct PmTrainer *trainer);

/**
 * Runs one iteration; `out` may be null.
 *
 * # Safety
 * `trainer` must be a live handle; `out`, if non-null, must be writable.
 */
enum PmStatus pm_trainer_step(struct PmTrainer *trainer, struct PmStep *out);

/**
 * Steps until the scenario horizon. Returns `PM_STATUS_NOT_CONVERGED` when
 * the final `|y - y_ref|` is not below `tol`.
 *
 * # Safety
 * As for [`pm_trainer_step`].
 */
enum PmStatus pm_trainer_run(struct PmTrainer *trainer, double tol, struct PmStep *out);

/**
 * Completed iterations, or 0 for a null handle.
 *
 * # Safety
 * `trainer` must be null or a live handle.
 */
uint64_t pm_trainer_iteration(const struct PmTrainer *trainer);

/**
 * Number of weights `q`, or 0 for a null handle.
 *
 * # Safety
 * `trainer` must be null or a live handle.
 */
size_t pm_trainer_weight_count(const struct PmTrainer *trainer);

/**
 * Copies the current weights into `buf` (capacity `len` values).
 *
 * # Safety
 * `trainer` must be a live handle; `buf` must hold `len` doubles.
 */
enum PmStatus pm_trainer_weights(const struct PmTrainer *trainer, double *buf, size_t len);

/**
 * Copies the controls of the last iteration (zeros before the first step).
 *
 * # Safety
 * As for [`pm_trainer_weights`].
 */
enum PmStatus pm_trainer_controls(const struct PmTrainer *trainer, double *buf, size_t len);

/**
 * Current network output for the active training input.
 *
 * # Safety
 * `trainer` must be a live handle; `out` must be writable.
 */
enum PmStatus pm_trainer_output(const struct PmTrainer *trainer, double *out);

/**
 * Changes training input `index` before the next iteration.
 *
 * # Safety
 * `trainer` must be a live handle.
 */
enum PmStatus pm_trainer_set_input(struct PmTrainer *trainer, size_t index, double value);

/**
 * # Safety
 * `trainer` must be a live handle.
 */
enum PmStatus pm_trainer_set_reference(struct PmTrainer *trainer, double value);

/**
 * Masks weight `index`, zeroing it and freezing its controller and filter.
 *
 * # Safety
 * `trainer` must be a live handle.
 */
enum PmStatus pm_trainer_drop_weight(struct PmTrainer *trainer, size_t index);

/**
 * # Safety
 * `trainer` must be a live handle.
 */
enum PmStatus pm_trainer_restore_weight(struct PmTrainer *trainer, size_t index);

/**
 * Builds a solver for the `n x n` row-major system `a x = b` with one
 * staggered controller per unknown.
 *
 * # Safety
 * `a` must hold `n * n` doubles, `b` `n` doubles, `params` must be readable
 * and `out` writable.
 */
enum PmStatus pm_linsolver_new(const double *a,
                               const double *b,
                               size_t n,
                               const struct PmControllerParams *params,
                               double rho,
                               double tau,
                               uint64_t horizon,
                               struct PmLinSolver **out);

/**
 * Creates the built-in three-unknown demonstration solver.
 *
 * # Safety
 * `out` must be writable.
 */
enum PmStatus pm_linsolver_new_demo(struct PmLinSolver **out);

/**
 * # Safety
 * `solver` must be null or a handle from `pm_linsolver_new*` not yet freed.
 */
void pm_linsolver_free(struct PmLinSolver *solver);

/**
 * Runs the solver over its horizon. Returns `PM_STATUS_NOT_CONVERGED` when
 * the final residual `max_j |(a x)_j - b_j|` is not below `tol`.
 *
 * # Safety
 * `solver` must be a live handle.
 */
enum PmStatus pm_linsolver_run(struct PmLinSolver *solver, double tol);

/**
 * # Safety
 * `solver` must be null or a live handle.
 */
size_t pm_linsolver_dimension(const struct PmLinSolver *solver);

/**
 * Copies the final iterate `x` into `buf`.
 *
 * # Safety
 * `solver` must be a live handle; `buf` must hold `len` doubles.
 */
enum PmStatus pm_linsolver_solution(const struct PmLinSolver *solver, double *buf, size_t len);

/**
 * Final residual and the settling iteration for `tol` (0 if never settled).
 *
 * # Safety
 * `solver` must be a live handle; `residual` must be writable; `settled_at`
 * may be null.
 */
enum PmStatus pm_linsolver_residual(const struct PmLinSolver *solver,
                                    double tol,
                                    double *residual,
                                    uint64_t *settled_at);

/**
 * One-shot solve: writes the final iterate to `x_out` (`n` values) and the
 * final residual to `residual`.
 *
 * # Safety
 * As for [`pm_linsolver_new`]; `x_out` must hold `n` doubles and `residual`
 * must be writable.
 */
enum PmStatus pm_solve_linear(const double *a,
                              const double *b,
                              size_t n,
                              const struct PmControllerParams *params,
                              double rho,
                              double tau,
                              uint64_t horizon,
                              double tol,
                              double *x_out,
                              double *residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARAMODEL_H */
