#ifndef HERALDSIM_H
#define HERALDSIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  HS_STATUS_NO_HERALD = 3,
  HS_STATUS_INFEASIBLE = 4,
  HS_STATUS_INTEGRATION = 5,
  HS_STATUS_IO = 6,
  HS_STATUS_PANIC = 7,
} HsStatus;

typedef enum HsPort {
  HS_PORT_C = 0,
  HS_PORT_D = 1,
} HsPort;

/**
 * Result of an ensemble run.
 */
typedef struct HsEnsemble HsEnsemble;

/**
 * Link between two emitters.
 */
typedef struct HsLink HsLink;

/**
 * Sampled excitation pulse.
 */
typedef struct HsPulse HsPulse;

typedef struct HsNoise {
  /**
   * Noise-click probability per window.
   */
  double p_d;
  /**
   * Phase setpoint jitter, rad.
   */
  double sigma_phase;
  /**
   * Frequency jitter FWHM, MHz.
   */
  double freq_fwhm;
  /**
   * Mean frequency difference, MHz.
   */
  double freq_offset;
} HsNoise;

typedef struct HsBin {
  double start;
  double end;
  /**
   * NaN when the bin saw no heralds.
   */
  double fidelity;
  double fidelity_stderr;
  double phase;
  uint64_t samples;
} HsBin;

typedef struct HsEmission {
  double p0;
  double p1;
  double p2;
  double p_de;
  double theta;
} HsEmission;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t hs_last_error(char *buf, size_t len);

/**
 * Creates a link with bright-state populations `alpha` and detection
 * efficiencies `eta`, ideal otherwise.
 *
 * # Safety
 * `alpha` and `eta` must point to two doubles; `out` must be writable.
 */
enum HsStatus hs_link_new(const double *alpha, const double *eta, struct HsLink **out);

/**
 * # Safety
 * `link` must be null or come from [`hs_link_new`], and not be used again.
 */
void hs_link_free(struct HsLink *link);

/**
 * Sets double-excitation probability, noise-click probability and the
 * polarization overlap.
 *
 * # Safety
 * `link` must be a live handle.
 */
enum HsStatus hs_link_set_imperfections(struct HsLink *link,
                                        double p_de,
                                        double p_d,
                                        double pol_overlap);

/**
 * Sets the phase setpoint and the target phase, rad.
 *
 * # Safety
 * `link` must be a live handle.
 */
enum HsStatus hs_link_set_phase(struct HsLink *link, double setpoint, double target);

/**
 * Window-integrated click probability and fidelity for one detector.
 *
 * # Safety
 * `link` must be a live handle; `p_click` and `fidelity` writable.
 */
enum HsStatus hs_link_herald(const struct HsLink *link,
                             enum HsPort port,
                             double *p_click,
                             double *fidelity);

/**
 * Bright-state populations maximizing fidelity at fixed click probability.
 *
 * # Safety
 * `alpha` must point to two writable doubles; `fidelity` writable.
 */
enum HsStatus hs_optimal_alphas(double eta_a,
                                double eta_b,
                                double p_click,
                                double *alpha,
                                double *fidelity);

/**
 * Monte Carlo ensemble over detection times and noise draws. `workers`
 * of 0 uses all cores; the result does not depend on it.
 *
 * # Safety
 * `link` must be a live handle, `noise` readable and `out` writable.
 */
enum HsStatus hs_ensemble_run(const struct HsLink *link,
                              const struct HsNoise *noise,
                              double tau,
                              double window_start,
                              double window_duration,
                              uint64_t samples,
                              uint64_t seed,
                              uint32_t workers,
                              struct HsEnsemble **out);

/**
 * # Safety
 * `ens` must be null or come from [`hs_ensemble_run`], and not be used again.
 */
void hs_ensemble_free(struct HsEnsemble *ens);

/**
 * Overall click probability, mean fidelity and its standard error.
 *
 * # Safety
 * `ens` must be a live handle; outputs writable.
 */
enum HsStatus hs_ensemble_summary(const struct HsEnsemble *ens,
                                  double *p_click,
                                  double *fidelity,
                                  double *fidelity_stderr);

/**
 * Number of detection-time bins, 0 for a null handle.
 *
 * # Safety
 * `ens` must be null or a live handle.
 */
size_t hs_ensemble_bin_count(const struct HsEnsemble *ens);

/**
 * # Safety
 * `ens` must be a live handle; `bin` writable.
 */
enum HsStatus hs_ensemble_bin(const struct HsEnsemble *ens, size_t index, struct HsBin *bin);

/**
 * Gaussian pulse with intensity FWHM `fwhm` ns peaking at `peak` ns,
 * scaled to rotation angle `theta` rad.
 *
 * # Safety
 * `out` must be writable.
 */
enum HsStatus hs_pulse_gaussian(double fwhm, double peak, double theta, struct HsPulse **out);

/**
 * Pulse from a two-column (t ns, intensity) CSV, scaled to `theta` rad.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` writable.
 */
enum HsStatus hs_pulse_from_csv(const char *path, double theta, struct HsPulse **out);

/**
 * # Safety
 * `pulse` must be null or a handle from this library, not used again.
 */
void hs_pulse_free(struct HsPulse *pulse);

/**
 * Emission statistics for a window given relative to the pulse peak.
 *
 * # Safety
 * `pulse` must be a live handle; `out` writable.
 */
enum HsStatus hs_pulse_emission(const struct HsPulse *pulse,
                                double tau,
                                double window_start,
                                double window_duration,
                                struct HsEmission *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HERALDSIM_H */
