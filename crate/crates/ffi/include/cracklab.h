#ifndef CRACKLAB_H
#define CRACKLAB_H

#pragma once

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Subcommands accepted by [`cracklab_experiment_run`].
 */
typedef enum CracklabCommand {
  CRACKLAB_COMMAND_SPECTRUM = 0,
  CRACKLAB_COMMAND_SOLVE = 1,
  CRACKLAB_COMMAND_FREQUENCY = 2,
  CRACKLAB_COMMAND_BLOWUP = 3,
  CRACKLAB_COMMAND_APPROX = 4,
  CRACKLAB_COMMAND_AUDIT = 5,
} CracklabCommand;

/**
 * Result codes of the C interface.
 */
typedef enum CracklabStatus {
  CRACKLAB_STATUS_OK = 0,
  CRACKLAB_STATUS_NULL_POINTER = 1,
  CRACKLAB_STATUS_INVALID_ARGUMENT = 2,
  CRACKLAB_STATUS_CONFIG = 3,
  CRACKLAB_STATUS_DOMAIN = 4,
  CRACKLAB_STATUS_NUMERICAL = 5,
  CRACKLAB_STATUS_ACCURACY = 6,
  CRACKLAB_STATUS_VALIDATION = 7,
  CRACKLAB_STATUS_IO = 8,
  CRACKLAB_STATUS_BUFFER_TOO_SMALL = 9,
  CRACKLAB_STATUS_PANIC = 10,
} CracklabStatus;

/**
 * Opaque experiment handle.
 */
typedef struct CracklabExperiment CracklabExperiment;

/**
 * Summary of a frequency fit.
 */
typedef struct CracklabFit {
  double gamma;
  double std_error;
  /**
   * Snapped ladder index, or -1 when the fit is not within the snap tolerance.
   */
  int32_t snapped_k;
  double window_min;
  double window_max;
} CracklabFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none failed.
 * The pointer stays valid until the next failing call on the thread.
 */
const char *cracklab_last_error(void);

/**
 * Exact eigenvalue `k(k+2N-2)/4` of the slit sphere `S^N` as a reduced fraction.
 *
 * # Safety
 * `numer` and `denom` must be valid for writes.
 */
enum CracklabStatus cracklab_ladder(uint32_t sphere_dim,
                                    uint32_t k,
                                    uint64_t *numer,
                                    uint64_t *denom);

/**
 * The unnormalised mode `ρ^{k/2} sin(kt/2)` at a unit vector of length `len`.
 *
 * # Safety
 * `theta` must point to `len` readable doubles and `out` must be valid for writes.
 */
enum CracklabStatus cracklab_exact_mode(uint32_t k, const double *theta, size_t len, double *out);

/**
 * Load an experiment from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum CracklabStatus cracklab_experiment_load(const char *path, struct CracklabExperiment **out);

/**
 * Build an experiment from TOML text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` valid for writes.
 */
enum CracklabStatus cracklab_experiment_from_toml(const char *text,
                                                  struct CracklabExperiment **out);

/**
 * Release a handle; null is ignored.
 *
 * # Safety
 * `exp` must come from this library and not be used afterwards.
 */
void cracklab_experiment_free(struct CracklabExperiment *exp);

/**
 * Copy the 64-character config hash and a terminating NUL into `buf`.
 *
 * # Safety
 * `exp` must be a live handle and `buf` valid for `len` bytes.
 */
enum CracklabStatus cracklab_experiment_hash(const struct CracklabExperiment *exp,
                                             char *buf,
                                             size_t len);

/**
 * Produce the field and fit its frequency order.
 *
 * # Safety
 * `exp` must be a live handle and `out` valid for writes.
 */
enum CracklabStatus cracklab_experiment_frequency(const struct CracklabExperiment *exp,
                                                  uint64_t seed,
                                                  struct CracklabFit *out);

/**
 * Run a subcommand writing artifacts into `out_dir`. `passed` receives 1
 * when every audited property held and 0 otherwise.
 *
 * # Safety
 * `exp` must be a live handle, `out_dir` a NUL-terminated string and
 * `passed` valid for writes or null.
 */
enum CracklabStatus cracklab_experiment_run(const struct CracklabExperiment *exp,
                                            enum CracklabCommand command,
                                            const char *out_dir,
                                            uint64_t seed,
                                            int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRACKLAB_H */
