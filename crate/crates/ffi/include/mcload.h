#ifndef MCLOAD_H
#define MCLOAD_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum McloadStatus {
  MCLOAD_STATUS_OK = 0,
  MCLOAD_STATUS_NULL_POINTER = 1,
  /**
   * An argument is outside the model's domain.
   */
  MCLOAD_STATUS_DOMAIN = 2,
  /**
   * No allocation meets the constraints.
   */
  MCLOAD_STATUS_INFEASIBLE = 3,
  MCLOAD_STATUS_UNBOUNDED = 4,
  /**
   * The exhaustive search space is too large.
   */
  MCLOAD_STATUS_SEARCH_SIZE = 5,
  /**
   * Malformed experiment configuration.
   */
  MCLOAD_STATUS_CONFIG = 6,
  MCLOAD_STATUS_NO_CONVERGENCE = 7,
  /**
   * A caller buffer is shorter than the data.
   */
  MCLOAD_STATUS_BUFFER_TOO_SMALL = 8,
  /**
   * Internal failure; the message has details.
   */
  MCLOAD_STATUS_PANIC = 9,
} McloadStatus;

/**
 * Integer bit allocation with powers.
 */
typedef struct McloadAllocation McloadAllocation;

/**
 * Channel realization (per-subcarrier CNR).
 */
typedef struct McloadChannel McloadChannel;

/**
 * Weights and targets of the power/bits objective.
 */
typedef struct McloadLoadingParams {
  /**
   * Weight on power in [0, 1]; bits get `1 - alpha`.
   */
  double alpha;
  /**
   * Power normalization (W).
   */
  double u_power;
  /**
   * Bits normalization.
   */
  double u_bits;
  /**
   * Per-subcarrier BER target.
   */
  double ber_th;
  uint32_t b_max;
} McloadLoadingParams;

/**
 * Energy-efficiency model and solver settings.
 */
typedef struct McloadEeParams {
  double est_var;
  double path_gain;
  double noise_var;
  double spacing_hz;
  double kappa;
  double circuit_power_w;
  /**
   * Minimum rate (bit/s); 0 for none.
   */
  double rate_floor;
  double tol;
} McloadEeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. Valid until the next
 * failing call on the same thread.
 */
const char *mcload_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mcload_version(void);

/**
 * Channel from `n` carrier-to-noise ratios.
 *
 * # Safety
 * `cnr` must point to `n` doubles; `out` must be writable.
 */
enum McloadStatus mcload_channel_from_cnr(const double *cnr,
                                          uintptr_t n,
                                          struct McloadChannel **out);

/**
 * Rayleigh-faded channel with mean CNR `avg_cnr`, reproducible from `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum McloadStatus mcload_channel_rayleigh(uintptr_t n,
                                          double avg_cnr,
                                          uint64_t seed,
                                          struct McloadChannel **out);

/**
 * # Safety
 * `ch` must be a live channel handle or null.
 */
uintptr_t mcload_channel_len(const struct McloadChannel *ch);

/**
 * Copies the CNRs into `buf` of capacity `cap`.
 *
 * # Safety
 * `ch` must be a live handle; `buf` must hold `cap` doubles.
 */
enum McloadStatus mcload_channel_cnr(const struct McloadChannel *ch, double *buf, uintptr_t cap);

/**
 * # Safety
 * `ch` must come from this library and not be used afterwards.
 */
void mcload_channel_free(struct McloadChannel *ch);

/**
 * Integer loading under a total power budget (`INFINITY` for none).
 *
 * # Safety
 * `ch` and `params` must be valid; `out` must be writable.
 */
enum McloadStatus mcload_allocate(const struct McloadChannel *ch,
                                  const struct McloadLoadingParams *params,
                                  double budget_w,
                                  struct McloadAllocation **out);

/**
 * Integer loading under a co-channel power cap and `bands` adjacent-band caps.
 * `leakage` is row-major, `bands` rows of one weight per subcarrier.
 *
 * # Safety
 * `aci_caps` must hold `bands` doubles and `leakage` `bands * len(ch)`.
 */
enum McloadStatus mcload_allocate_cognitive(const struct McloadChannel *ch,
                                            const struct McloadLoadingParams *params,
                                            double power_cap_w,
                                            const double *aci_caps_w,
                                            const double *leakage,
                                            uintptr_t bands,
                                            struct McloadAllocation **out);

/**
 * Exact integer optimum by exhaustive search under a total power budget; small `n` only.
 *
 * # Safety
 * As [`mcload_allocate`].
 */
enum McloadStatus mcload_oracle(const struct McloadChannel *ch,
                                const struct McloadLoadingParams *params,
                                double budget_w,
                                struct McloadAllocation **out);

/**
 * # Safety
 * `a` must be a live allocation handle or null.
 */
uintptr_t mcload_allocation_len(const struct McloadAllocation *a);

/**
 * Objective value; NaN for a null handle.
 *
 * # Safety
 * `a` must be a live allocation handle or null.
 */
double mcload_allocation_objective(const struct McloadAllocation *a);

/**
 * # Safety
 * `a` must be a live handle; `buf` must hold `cap` values.
 */
enum McloadStatus mcload_allocation_bits(const struct McloadAllocation *a,
                                         uint32_t *buf,
                                         uintptr_t cap);

/**
 * # Safety
 * `a` must be a live handle; `buf` must hold `cap` values.
 */
enum McloadStatus mcload_allocation_power(const struct McloadAllocation *a,
                                          double *buf,
                                          uintptr_t cap);

/**
 * # Safety
 * `a` must come from this library and not be used afterwards.
 */
void mcload_allocation_free(struct McloadAllocation *a);

/**
 * Minimum energy per bit under a total power cap. `est_gains` and `interference` have
 * `n` entries each; the powers go to `power_out` (capacity `n`), the J/bit figure to
 * `q_out`.
 *
 * # Safety
 * All pointers must be valid for the stated lengths.
 */
enum McloadStatus mcload_energy_per_bit(const double *est_gains,
                                        const double *interference,
                                        uintptr_t n,
                                        const struct McloadEeParams *params,
                                        double power_cap_w,
                                        double *power_out,
                                        double *q_out);

/**
 * Runs an experiment from config text and returns the CSV as a new string (free with
 * [`mcload_string_free`]). `seed_override` replaces the config seed when `use_seed` is
 * nonzero; `workers` of 0 uses all cores.
 *
 * # Safety
 * `config` must be NUL-terminated UTF-8; `csv_out` must be writable.
 */
enum McloadStatus mcload_run_experiment(const char *config,
                                        int32_t use_seed,
                                        uint64_t seed_override,
                                        uintptr_t workers,
                                        char **csv_out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void mcload_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCLOAD_H */
