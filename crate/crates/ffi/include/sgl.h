#ifndef SGL_H
#define SGL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status of an FFI call. Anything but `Ok` sets the last-error message.
 */
typedef enum SglStatus {
  SGL_STATUS_OK = 0,
  SGL_STATUS_NULL_POINTER = 1,
  SGL_STATUS_INVALID_ARGUMENT = 2,
  SGL_STATUS_DOMAIN = 3,
  SGL_STATUS_CONFIG = 4,
  SGL_STATUS_DIVERGENCE = 5,
  SGL_STATUS_NON_FINITE = 6,
  SGL_STATUS_IO = 7,
  /**
   * A run finished but at least one checked property failed.
   */
  SGL_STATUS_PROPERTY_FAILURE = 8,
  SGL_STATUS_PANIC = 9,
  SGL_STATUS_OTHER = 10,
} SglStatus;

/**
 * One-dimensional Gaussian mixture.
 */
typedef struct SglMixture SglMixture;

/**
 * Score network.
 */
typedef struct SglModel SglModel;

/**
 * Forward SDE.
 */
typedef struct SglSde SglSde;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *sgl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sgl_version(void);

/**
 * Ornstein-Uhlenbeck process `dx = -x dt + √2 dW` on `[0, horizon]`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SglStatus sgl_sde_ou(double horizon, struct SglSde **out);

/**
 * Variance-exploding process `dx = g dW` on `[0, horizon]`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SglStatus sgl_sde_ve_constant(double g, double horizon, struct SglSde **out);

/**
 * # Safety
 * `sde` must be null or a handle from this library, not yet freed.
 */
void sgl_sde_free(struct SglSde *sde);

/**
 * Perturbation kernel `x(t) | x(0) ~ N(r x(0), r² v)`: writes `r(t)` and `v(t)`.
 *
 * # Safety
 * `sde` must be a live handle; `r` and `v` valid for writes.
 */
enum SglStatus sgl_sde_kernel(const struct SglSde *sde, double t, double *r, double *v);

/**
 * Mixture of `k` components; weights must sum to one.
 *
 * # Safety
 * `weights`, `means` and `variances` must each point to `k` readable values.
 */
enum SglStatus sgl_mixture_new(const double *weights,
                               const double *means,
                               const double *variances,
                               size_t k,
                               struct SglMixture **out);

/**
 * # Safety
 * `gm` must be null or a handle from this library, not yet freed.
 */
void sgl_mixture_free(struct SglMixture *gm);

/**
 * Density and score of the mixture at `x`; either out-pointer may be null.
 *
 * # Safety
 * `gm` must be a live handle; non-null out-pointers valid for writes.
 */
enum SglStatus sgl_mixture_eval(const struct SglMixture *gm,
                                double x,
                                double *density,
                                double *score);

/**
 * One-dimensional random-feature net of width `m` with zero readout.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SglStatus sgl_model_random_feature(size_t m,
                                        size_t embedding_dim,
                                        double horizon,
                                        uint64_t seed,
                                        struct SglModel **out);

/**
 * One-dimensional Swish network with `h` hidden units.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SglStatus sgl_model_swish(size_t h,
                               size_t embedding_dim,
                               double horizon,
                               uint64_t seed,
                               struct SglModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, not yet freed.
 */
void sgl_model_free(struct SglModel *model);

/**
 * Number of trainable parameters.
 *
 * # Safety
 * `model` must be a live handle; `out` valid for a write.
 */
enum SglStatus sgl_model_n_params(const struct SglModel *model, size_t *out);

/**
 * Copies the parameter vector into `buf` (`len` must equal the parameter count).
 *
 * # Safety
 * `model` must be a live handle; `buf` must point to `len` writable values.
 */
enum SglStatus sgl_model_get_params(const struct SglModel *model, double *buf, size_t len);

/**
 * Overwrites the parameter vector from `buf`.
 *
 * # Safety
 * `model` must be a live handle; `buf` must point to `len` readable values.
 */
enum SglStatus sgl_model_set_params(struct SglModel *model, const double *buf, size_t len);

/**
 * Score `s(x, t)`, checked against the SDE's time range.
 *
 * # Safety
 * `model` and `sde` must be live handles; `out` valid for a write.
 */
enum SglStatus sgl_model_score(const struct SglModel *model,
                               const struct SglSde *sde,
                               double x,
                               double t,
                               double *out);

/**
 * `KL(target ‖ model density)` on the target's standard grid.
 *
 * # Safety
 * All handles must be live; `out` valid for a write.
 */
enum SglStatus sgl_model_kl(const struct SglModel *model,
                            const struct SglSde *sde,
                            const struct SglMixture *target,
                            double *out);

/**
 * Writes a checkpoint to `path` (plus a `.json` sidecar).
 *
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum SglStatus sgl_model_save(const struct SglModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` valid for a pointer write.
 */
enum SglStatus sgl_model_load(const char *path, struct SglModel **out);

/**
 * Total of the single-mode bound with unit constants.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SglStatus sgl_bound(double tau, double m, double n, double prior_gap, double *out);

/**
 * Training time minimizing the bound with unit constants.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SglStatus sgl_optimal_tau(double m, double n, double *out);

/**
 * Runs an experiment by name (`kl-dynamics`, `bounds`, `verify`, ...). `config_path`
 * may be null for the built-in preset; `out_dir` may be null for the default.
 * Returns `PropertyFailure` when a verification property fails.
 *
 * # Safety
 * String arguments must be null (where allowed) or NUL-terminated UTF-8.
 */
enum SglStatus sgl_run_experiment(const char *experiment,
                                  const char *config_path,
                                  const char *out_dir,
                                  uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGL_H */
