#ifndef WAVESYNC_H
#define WAVESYNC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WsStatus {
  WS_STATUS_OK = 0,
  WS_STATUS_NULL_POINTER = 1,
  WS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed or inconsistent input data.
   */
  WS_STATUS_INPUT = 3,
  WS_STATUS_CONFIG = 4,
  WS_STATUS_IO = 5,
  WS_STATUS_NUMERICAL = 6,
  WS_STATUS_BUFFER_TOO_SMALL = 7,
  WS_STATUS_PANIC = 8,
} WsStatus;

/**
 * Coherence field of two aligned monthly series with surrogate p-values.
 */
typedef struct WsCoherence WsCoherence;

/**
 * Posterior summary of a fitted panel model.
 */
typedef struct WsFit WsFit;

typedef struct WsSummary {
  double estimate;
  double sd;
  /**
   * 2.5% posterior quantile.
   */
  double lower;
  /**
   * 97.5% posterior quantile.
   */
  double upper;
  double rhat;
  double ess_bulk;
} WsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ws_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated, always
 * NUL-terminated when `len > 0`). Returns the full length including the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ws_last_error(char *buf, size_t len);

/**
 * Log density of the zero-inflated beta distribution.
 *
 * # Safety
 * `out` must be a valid pointer to one `double`.
 */
enum WsStatus ws_zib_logdensity(double y, double pi, double mu, double phi, double *out);

/**
 * Computes wavelet coherence on the default 18 to 102 month grid.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` must be a valid pointer.
 */
enum WsStatus ws_coherence_new(const double *x,
                               const double *y,
                               size_t n,
                               int32_t start_year,
                               uint32_t start_month,
                               size_t n_surrogates,
                               uint64_t seed,
                               struct WsCoherence **out);

/**
 * # Safety
 * `h` must be a live handle; the outputs must be valid pointers.
 */
enum WsStatus ws_coherence_shape(const struct WsCoherence *h, size_t *n_scales, size_t *n_times);

/**
 * Fourier periods (months) of the scale grid.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum WsStatus ws_coherence_periods(const struct WsCoherence *h, double *out, size_t len);

/**
 * Coherence magnitudes, scale-major (`scale * n_times + time`).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum WsStatus ws_coherence_values(const struct WsCoherence *h, double *out, size_t len);

/**
 * Surrogate p-values in the same layout as [`ws_coherence_values`].
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum WsStatus ws_coherence_pvalues(const struct WsCoherence *h, double *out, size_t len);

/**
 * 1 where the cell lies inside the cone of influence.
 *
 * # Safety
 * `out` must point to `len` writable bytes.
 */
enum WsStatus ws_coherence_coi(const struct WsCoherence *h, uint8_t *out, size_t len);

/**
 * Band time lag per month (`band` is "short" or "long"). Positive values
 * mean y leads x. `reliable` may be null.
 *
 * # Safety
 * `band` must be a NUL-terminated string; `delta_t` and (if non-null)
 * `reliable` must hold `len` elements.
 */
enum WsStatus ws_coherence_band_lag(const struct WsCoherence *h,
                                    const char *band,
                                    double alpha,
                                    double *delta_t,
                                    uint8_t *reliable,
                                    size_t len);

/**
 * # Safety
 * `h` must be null or a handle from [`ws_coherence_new`] not yet freed.
 */
void ws_coherence_free(struct WsCoherence *h);

/**
 * Assembles the regression panel from a sync file, dyad covariates and a
 * TOML model spec, then samples the posterior. `seed` overrides the spec's
 * sampler seed.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be a valid pointer.
 */
enum WsStatus ws_fit_from_files(const char *sync_csv,
                                const char *covariates_csv,
                                const char *model_toml,
                                uint64_t seed,
                                struct WsFit **out);

/**
 * Number of reported parameters, 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t ws_fit_n_params(const struct WsFit *h);

/**
 * Rows of the estimation sample, 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t ws_fit_n_rows(const struct WsFit *h);

/**
 * 1 when the convergence checks passed.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
int32_t ws_fit_converged(const struct WsFit *h);

/**
 * Parameter name owned by the handle, or null when out of range.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
const char *ws_fit_param_name(const struct WsFit *h, size_t index);

/**
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum WsStatus ws_fit_summary(const struct WsFit *h, size_t index, struct WsSummary *out);

/**
 * PSIS-LOO expected log predictive density and its standard error.
 *
 * # Safety
 * `h` must be a live handle; outputs must be valid pointers.
 */
enum WsStatus ws_fit_elpd(const struct WsFit *h, double *elpd, double *se);

/**
 * # Safety
 * `h` must be null or a handle from [`ws_fit_from_files`] not yet freed.
 */
void ws_fit_free(struct WsFit *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVESYNC_H */
