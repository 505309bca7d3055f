#ifndef ALLACT_H
#define ALLACT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum AllactStatus {
  ALLACT_STATUS_OK = 0,
  ALLACT_STATUS_NULL_POINTER = 1,
  ALLACT_STATUS_INVALID_UTF8 = 2,
  ALLACT_STATUS_CONFIG = 3,
  ALLACT_STATUS_ARGUMENT = 4,
  ALLACT_STATUS_NUMERIC = 5,
  ALLACT_STATUS_UNSUPPORTED = 6,
  ALLACT_STATUS_IO = 7,
  /**
   * An output buffer is shorter than required.
   */
  ALLACT_STATUS_BUFFER_TOO_SMALL = 8,
  ALLACT_STATUS_PANIC = 9,
} AllactStatus;

/**
 * Opaque experiment: a resolved config and the agent of the last training run.
 */
typedef struct AllactExperiment AllactExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a NUL-terminated
 * string, truncating to `len - 1` bytes. Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t allact_last_error(char *buf, size_t len);

/**
 * Creates an experiment from TOML text layered over the preset named by
 * `env.kind`.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out` must be writable.
 */
enum AllactStatus allact_experiment_new(const char *config_toml, struct AllactExperiment **out);

/**
 * Creates an experiment from a named preset (`bandit`, `lqr`, `pendulum`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum AllactStatus allact_experiment_preset(const char *name, struct AllactExperiment **out);

/**
 * Releases an experiment. Null is ignored.
 *
 * # Safety
 * `h` must be null or a handle from this library not yet freed.
 */
void allact_experiment_free(struct AllactExperiment *h);

/**
 * Number of policy parameters, the length of every gradient.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum AllactStatus allact_param_dim(struct AllactExperiment *h, size_t *out);

/**
 * Trains one run of `episodes` episodes with the configured estimator and
 * keeps the resulting agent in the handle.
 *
 * Writes per-episode scores and cumulative environment steps (each buffer
 * needs `episodes` slots) and the number of completed episodes to `written`.
 * A run stopped by a numeric failure still writes its episodes and returns
 * `Numeric`.
 *
 * # Safety
 * Buffers must be valid for their stated lengths; `written` must be writable.
 */
enum AllactStatus allact_train(struct AllactExperiment *h,
                               uint64_t seed,
                               size_t episodes,
                               double *scores,
                               size_t scores_len,
                               uint64_t *env_steps,
                               size_t env_steps_len,
                               size_t *written);

/**
 * One gradient estimate over a fresh rollout of the current agent.
 *
 * `estimator` is `reinforce`, `mc-<N>` or `quad-<N>`. `grad` needs
 * [`allact_param_dim`] slots. Results depend only on the handle and `seed`.
 *
 * # Safety
 * `estimator` must be a NUL-terminated string and `grad` valid for `grad_len`.
 */
enum AllactStatus allact_estimate(struct AllactExperiment *h,
                                  const char *estimator,
                                  uint64_t seed,
                                  double *grad,
                                  size_t grad_len);

/**
 * Monte Carlo gradient MSE of the current agent for each `ns[i]` against a
 * REINFORCE reference of `sweep.reference_rollouts` rollouts.
 *
 * # Safety
 * `ns` must hold `n` values; `mse` and `se` must each hold `n` slots.
 */
enum AllactStatus allact_mse_sweep(struct AllactExperiment *h,
                                   const size_t *ns,
                                   size_t n,
                                   size_t estimates,
                                   uint64_t seed,
                                   double *mse,
                                   double *se);

/**
 * Least-squares fit `mse ≈ c0 + c1 / N_S` with its R².
 *
 * # Safety
 * `ns` and `mse` must hold `n` values; outputs must be writable.
 */
enum AllactStatus allact_fit_inverse_n(const size_t *ns,
                                       const double *mse,
                                       size_t n,
                                       double *c0,
                                       double *c1,
                                       double *r_squared);

/**
 * Environment steps at the first episode whose trailing `window`-episode
 * mean score reaches `threshold`. `solved` is set to 0 when never reached.
 *
 * # Safety
 * `scores` and `env_steps` must hold `n` values; outputs must be writable.
 */
enum AllactStatus allact_steps_to_solve(const double *scores,
                                        const uint64_t *env_steps,
                                        size_t n,
                                        double threshold,
                                        size_t window,
                                        uint8_t *solved,
                                        uint64_t *steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALLACT_H */
