#ifndef BCOS_H
#define BCOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BcosAlgorithm {
  BCOS_ALGORITHM_SGD = 0,
  BCOS_ALGORITHM_SGD_MOMENTUM = 1,
  BCOS_ALGORITHM_SIGN_SGD = 2,
  BCOS_ALGORITHM_SIGN_MOMENTUM = 3,
  BCOS_ALGORITHM_BCOS_G = 4,
  BCOS_ALGORITHM_BCOS_M = 5,
  BCOS_ALGORITHM_BCOS_C = 6,
  BCOS_ALGORITHM_ADAM = 7,
} BcosAlgorithm;

typedef enum BcosScheduleKind {
  BCOS_SCHEDULE_KIND_CONSTANT = 0,
  BCOS_SCHEDULE_KIND_INVERSE_TIME = 1,
  BCOS_SCHEDULE_KIND_POWER = 2,
  BCOS_SCHEDULE_KIND_WARMUP_COSINE = 3,
  BCOS_SCHEDULE_KIND_WARMUP_LINEAR = 4,
} BcosScheduleKind;

typedef enum BcosStatus {
  BCOS_STATUS_OK = 0,
  BCOS_STATUS_NULL_POINTER = 1,
  BCOS_STATUS_INVALID_ARGUMENT = 2,
  BCOS_STATUS_LENGTH_MISMATCH = 3,
  BCOS_STATUS_NON_FINITE = 4,
  BCOS_STATUS_DECAY_TOO_LARGE = 5,
  BCOS_STATUS_UNSUPPORTED = 6,
  BCOS_STATUS_INTERNAL = 7,
} BcosStatus;

/**
 * Opaque optimizer handle.
 */
typedef struct BcosOptimizer BcosOptimizer;

/**
 * Opaque noisy quadratic with its own gradient-noise stream.
 */
typedef struct BcosQuadratic BcosQuadratic;

/**
 * Optimizer settings passed by value.
 */
typedef struct BcosOptimizerConfig {
  enum BcosAlgorithm algorithm;
  double beta1;
  double beta2;
  double epsilon;
  double weight_decay;
  /**
   * True applies weight decay to the iterate instead of the gradient.
   */
  bool decoupled;
} BcosOptimizerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bcos_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into this library from the same thread.
 */
const char *bcos_last_error_message(void);

/**
 * Defaults for `algorithm`: beta1 0.9, beta2 0.99, epsilon 1e-6, no decay.
 */
struct BcosOptimizerConfig bcos_optimizer_config_default(enum BcosAlgorithm algorithm);

/**
 * Creates an optimizer over `dim` parameters in blocks of `block_size`.
 *
 * # Safety
 * `config` must point to a valid config and `out` to writable storage for a handle.
 */
enum BcosStatus bcos_optimizer_new(const struct BcosOptimizerConfig *config,
                                   size_t dim,
                                   size_t block_size,
                                   struct BcosOptimizer **out);

/**
 * One step `x <- x - alpha * update(g)` in place. On error `x` is unchanged.
 *
 * # Safety
 * `opt` must come from [`bcos_optimizer_new`]; `x` and `g` must hold `len` values.
 */
enum BcosStatus bcos_optimizer_step(struct BcosOptimizer *opt,
                                    double *x,
                                    const double *g,
                                    size_t len,
                                    double alpha);

/**
 * Number of steps taken, or 0 for a null handle.
 *
 * # Safety
 * `opt` must be null or come from [`bcos_optimizer_new`].
 */
uint64_t bcos_optimizer_steps(const struct BcosOptimizer *opt);

/**
 * # Safety
 * `opt` must be null or come from [`bcos_optimizer_new`] and not be freed twice.
 */
void bcos_optimizer_free(struct BcosOptimizer *opt);

/**
 * Stepsize at step `t` of a schedule.
 *
 * # Safety
 * `out` must point to writable storage for one double.
 */
enum BcosStatus bcos_schedule_value(enum BcosScheduleKind kind,
                                    double alpha,
                                    double power,
                                    size_t warmup_steps,
                                    size_t total_steps,
                                    double alpha_min_ratio,
                                    size_t t,
                                    double *out);

/**
 * `n + λ² ‖x*‖² + 2λ ‖x*‖₁` over `n` blocks.
 *
 * # Safety
 * `x_star` must hold `len` values and `out` must be writable.
 */
enum BcosStatus bcos_b_star(size_t n_blocks,
                            double lambda,
                            const double *x_star,
                            size_t len,
                            double *out);

/**
 * Quadratic `½ Σ h_i (x_i − c_i)²` with gradient noise `h_i σ_i z`, z standard
 * normal, drawn from a stream seeded by `seed`.
 *
 * # Safety
 * `h`, `sigma` and `center` must hold `n` values and `out` must be writable.
 */
enum BcosStatus bcos_quadratic_new(const double *h,
                                   const double *sigma,
                                   const double *center,
                                   size_t n,
                                   uint64_t seed,
                                   struct BcosQuadratic **out);

/**
 * Draws a stochastic gradient at `x` into `g`.
 *
 * # Safety
 * `q` must come from [`bcos_quadratic_new`]; `x` and `g` must hold `len` values.
 */
enum BcosStatus bcos_quadratic_sample_gradient(struct BcosQuadratic *q,
                                               const double *x,
                                               double *g,
                                               size_t len);

/**
 * Expected loss at `x`.
 *
 * # Safety
 * `q` must come from [`bcos_quadratic_new`]; `x` must hold `len` values.
 */
enum BcosStatus bcos_quadratic_loss(const struct BcosQuadratic *q,
                                    const double *x,
                                    size_t len,
                                    double *out);

/**
 * # Safety
 * `q` must be null or come from [`bcos_quadratic_new`] and not be freed twice.
 */
void bcos_quadratic_free(struct BcosQuadratic *q);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BCOS_H */
