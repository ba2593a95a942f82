#ifndef SPINBOSON_H
#define SPINBOSON_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_UTF8 = 2,
  SB_STATUS_INVALID_ARGUMENT = 3,
  SB_STATUS_CONFIG = 4,
  SB_STATUS_NUMERICAL = 5,
  SB_STATUS_SOLVER_ABORT = 6,
  SB_STATUS_ABORT_FRACTION = 7,
  SB_STATUS_TRUNCATION = 8,
  SB_STATUS_IO = 9,
  SB_STATUS_BUFFER_TOO_SMALL = 10,
  SB_STATUS_PANIC = 11,
} SbStatus;

/**
 * Discretized harmonic bath.
 */
typedef struct SbBath SbBath;

/**
 * Parsed run configuration.
 */
typedef struct SbConfig SbConfig;

/**
 * Completed ensemble run.
 */
typedef struct SbResult SbResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sb_version(void);

/**
 * Length in bytes (without the terminator) of the last error message on this
 * thread, or 0 when the last call succeeded.
 */
size_t sb_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len - 1` bytes). Returns the number of bytes written excluding the
 * terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t sb_last_error_message(char *buf, size_t len);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum SbStatus sb_config_parse(const char *toml, struct SbConfig **out);

/**
 * Reads and parses a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum SbStatus sb_config_from_file(const char *path, struct SbConfig **out);

/**
 * Overrides the master seed (at most `i64::MAX`).
 *
 * # Safety
 * `cfg` must come from `sb_config_parse` or `sb_config_from_file`.
 */
enum SbStatus sb_config_set_seed(struct SbConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be null or a live handle; it is invalid afterwards.
 */
void sb_config_free(struct SbConfig *cfg);

/**
 * Runs the ensemble described by `cfg` without writing files.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be valid for writes.
 */
enum SbStatus sb_run(const struct SbConfig *cfg, struct SbResult **out);

/**
 * Number of output times.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t sb_result_len(const struct SbResult *res);

/**
 * Number of trajectories that completed.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t sb_result_n_effective(const struct SbResult *res);

/**
 * # Safety
 * `res` must be a live handle; `buf` must be valid for `len` doubles.
 */
enum SbStatus sb_result_times(const struct SbResult *res, double *buf, size_t len);

/**
 * Ensemble mean of the population difference.
 *
 * # Safety
 * `res` must be a live handle; `buf` must be valid for `len` doubles.
 */
enum SbStatus sb_result_pz_mean(const struct SbResult *res, double *buf, size_t len);

/**
 * # Safety
 * `res` must be a live handle; `buf` must be valid for `len` doubles.
 */
enum SbStatus sb_result_pz_stderr(const struct SbResult *res, double *buf, size_t len);

/**
 * Writes `results.tsv` and `manifest.json` into `dir`.
 *
 * # Safety
 * `res` must be a live handle; `dir` must be a NUL-terminated string.
 */
enum SbStatus sb_result_write(const struct SbResult *res, const char *dir);

/**
 * # Safety
 * `res` must be null or a live handle; it is invalid afterwards.
 */
void sb_result_free(struct SbResult *res);

/**
 * `J(omega)` with `omega_c = 1`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SbStatus sb_spectral_density(double omega, double s, double alpha, double *out);

/**
 * Discretizes the bath into `n_b` modes on `[0, 10 omega_c]`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SbStatus sb_bath_discretize(double s, double alpha, size_t n_b, struct SbBath **out);

/**
 * # Safety
 * `bath` must be null or a live handle.
 */
size_t sb_bath_n_modes(const struct SbBath *bath);

/**
 * # Safety
 * `bath` must be a live handle; `buf` must be valid for `len` doubles.
 */
enum SbStatus sb_bath_frequencies(const struct SbBath *bath, double *buf, size_t len);

/**
 * # Safety
 * `bath` must be a live handle; `buf` must be valid for `len` doubles.
 */
enum SbStatus sb_bath_couplings(const struct SbBath *bath, double *buf, size_t len);

/**
 * # Safety
 * `bath` must be null or a live handle; it is invalid afterwards.
 */
void sb_bath_free(struct SbBath *bath);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINBOSON_H */
