#ifndef GGCOND_H
#define GGCOND_H

/* This file is generated by cbindgen from ggcond-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call across the C boundary.
 */
typedef enum {
  /**
   * The call succeeded.
   */
  GGC_STATUS_OK = 0,
  /**
   * A required pointer was null or an index was out of range.
   */
  GGC_STATUS_INVALID_ARGUMENT = 1,
  /**
   * A mathematical precondition was violated.
   */
  GGC_STATUS_DOMAIN_ERROR = 2,
  /**
   * A configuration value was rejected.
   */
  GGC_STATUS_CONFIG_ERROR = 3,
  /**
   * A factorization or solve failed numerically.
   */
  GGC_STATUS_NUMERICAL_ERROR = 4,
} GgcStatus;

/**
 * A finished greedy selection trace.
 */
typedef struct GgcGreedy GgcGreedy;

/**
 * A jointly Gaussian pair `(X, Y)` on finite grids.
 */
typedef struct GgcModel GgcModel;

/**
 * A posterior kernel of `X` conditioned on selected coordinates of `Y`.
 */
typedef struct GgcPosterior GgcPosterior;

/**
 * Message describing the most recent error on this thread, or null when no
 * error has occurred. The pointer stays valid until the next failing call
 * on the same thread.
 */
const char *ggc_last_error_message(void);

/**
 * Version of the underlying library as a static C string.
 */
const char *ggc_version(void);

/**
 * Brownian motion on `[0,1]` observed on `[1/2,1]` through an independent
 * offset of variance `noise_variance` (0 for the noiseless restriction).
 * `x_points`/`y_points` are the grid sizes (at least 2 each).
 *
 * # Safety
 * `out_status` must be null or point to writable memory.
 */
GgcModel *ggc_model_brownian_new(double noise_variance,
                                 uintptr_t x_points,
                                 uintptr_t y_points,
                                 GgcStatus *out_status);

/**
 * Gaussian variable with the given covariance eigenvalues in a fixed
 * orthonormal function family on `[0,1]`, observing the coefficients listed
 * in `kept`.
 *
 * # Safety
 * `eigenvalues` must point to `n_eigenvalues` doubles, `kept` to `n_kept`
 * indices; `out_status` must be null or writable.
 */
GgcModel *ggc_model_eigen_new(const double *eigenvalues,
                              uintptr_t n_eigenvalues,
                              const uintptr_t *kept,
                              uintptr_t n_kept,
                              uintptr_t grid_points,
                              GgcStatus *out_status);

/**
 * Number of grid points carrying `X`.
 *
 * # Safety
 * `model` must be a live handle from a `ggc_model_*_new` call.
 */
uintptr_t ggc_model_nx(const GgcModel *model);

/**
 * Number of observation coordinates carrying `Y`.
 *
 * # Safety
 * `model` must be a live handle from a `ggc_model_*_new` call.
 */
uintptr_t ggc_model_ny(const GgcModel *model);

/**
 * Sup-norm bound of the exact conditional-mean transfer operator of this
 * model.
 *
 * # Safety
 * `model` must be live; `out_norm` must point to a writable double.
 */
GgcStatus ggc_model_transfer_norm(const GgcModel *model, double *out_norm);

/**
 * Free a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not freed before.
 */
void ggc_model_free(GgcModel *model);

/**
 * Run the weak greedy selection on the model's observation kernel.
 * `gamma = 1` selects the argmax deterministically; `gamma` in `(0,1)`
 * samples uniformly among candidates above the threshold, driven by `seed`.
 * A nonpositive `stop_tol` selects the default (`1e-12` times the initial
 * supremum).
 *
 * # Safety
 * `model` must be live; `out_status` must be null or writable.
 */
GgcGreedy *ggc_greedy_run(const GgcModel *model,
                          double gamma,
                          uint64_t seed,
                          uintptr_t n_max,
                          double stop_tol,
                          GgcStatus *out_status);

/**
 * Number of selections in the trace.
 *
 * # Safety
 * `greedy` must be a live handle from [`ggc_greedy_run`].
 */
uintptr_t ggc_greedy_len(const GgcGreedy *greedy);

/**
 * Read one step of the trace: the selected observation index, its
 * coordinate, and the squared power-function supremum before the selection.
 *
 * # Safety
 * `greedy` must be live; the out pointers must be null or writable.
 */
GgcStatus ggc_greedy_step(const GgcGreedy *greedy,
                          uintptr_t step,
                          uintptr_t *out_index,
                          double *out_point,
                          double *out_sup_power_sq);

/**
 * Free a greedy trace. Null is ignored.
 *
 * # Safety
 * `greedy` must be null or a handle not freed before.
 */
void ggc_greedy_free(GgcGreedy *greedy);

/**
 * Condition the model's `X` on the observation coordinates listed in
 * `selected` (`n_selected` may be zero for the prior).
 *
 * # Safety
 * `model` must be live; `selected` must point to `n_selected` indices or be
 * null when `n_selected` is zero; `out_status` must be null or writable.
 */
GgcPosterior *ggc_posterior_new(const GgcModel *model,
                                const uintptr_t *selected,
                                uintptr_t n_selected,
                                GgcStatus *out_status);

/**
 * Residual kernel value `k_{X|sel}(s_i, s_j)` at grid indices.
 *
 * # Safety
 * `posterior` must be live; `out_value` must point to a writable double.
 */
GgcStatus ggc_posterior_residual_at(const GgcPosterior *posterior,
                                    uintptr_t i,
                                    uintptr_t j,
                                    double *out_value);

/**
 * Operator norm of the posterior residual over the grid (the largest
 * diagonal entry) and the point attaining it.
 *
 * # Safety
 * `posterior` must be live; the out pointers must be null or writable.
 */
GgcStatus ggc_posterior_opnorm(const GgcPosterior *posterior,
                               double *out_value,
                               double *out_argmax_point);

/**
 * Free a posterior handle. Null is ignored.
 *
 * # Safety
 * `posterior` must be null or a handle not freed before.
 */
void ggc_posterior_free(GgcPosterior *posterior);

#endif  /* GGCOND_H */
