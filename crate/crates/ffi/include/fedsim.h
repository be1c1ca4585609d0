#ifndef FEDSIM_H
#define FEDSIM_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FedsimStatus {
  FEDSIM_STATUS_OK = 0,
  FEDSIM_STATUS_NULL_POINTER = 1,
  FEDSIM_STATUS_INVALID_UTF8 = 2,
  FEDSIM_STATUS_INVALID_CONFIG = 3,
  FEDSIM_STATUS_INVALID_INPUT = 4,
  FEDSIM_STATUS_DIMENSION = 5,
  FEDSIM_STATUS_NUMERIC = 6,
  FEDSIM_STATUS_INSUFFICIENT_DATA = 7,
  FEDSIM_STATUS_PARSE = 8,
  FEDSIM_STATUS_IO = 9,
  FEDSIM_STATUS_OUT_OF_RANGE = 10,
  FEDSIM_STATUS_INTERNAL = 11,
  FEDSIM_STATUS_PANIC = 12,
} FedsimStatus;

/**
 * Experiment configuration.
 */
typedef struct FedsimConfig FedsimConfig;

/**
 * Finished run: per-round logs and the final global model.
 */
typedef struct FedsimRun FedsimRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next fedsim call on the same thread.
 */
const char *fedsim_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void fedsim_string_free(char *s);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FedsimStatus fedsim_config_default(struct FedsimConfig **out);

/**
 * Parses and validates a JSON configuration. Missing keys take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FedsimStatus fedsim_config_from_json(const char *json, struct FedsimConfig **out);

/**
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum FedsimStatus fedsim_config_to_json(const struct FedsimConfig *config, char **out);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum FedsimStatus fedsim_config_set_seed(struct FedsimConfig *config, uint64_t seed);

/**
 * Sets the variant by name: `fedavg`, `fedprox[:mu]`, `fedcab`, `feddecab`,
 * `fedprox+[:mu]` or `local-only`.
 *
 * # Safety
 * `config` must be a live handle and `name` a NUL-terminated string.
 */
enum FedsimStatus fedsim_config_set_variant(struct FedsimConfig *config, const char *name);

/**
 * # Safety
 * `config` must be null or a live handle; it is invalid afterwards.
 */
void fedsim_config_free(struct FedsimConfig *config);

/**
 * Runs the experiment to completion. A run that stops early on a non-finite
 * value still succeeds; check [`fedsim_run_aborted`].
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum FedsimStatus fedsim_run(const struct FedsimConfig *config, struct FedsimRun **out);

/**
 * Number of logged rounds, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t fedsim_run_rounds(const struct FedsimRun *run);

/**
 * Whether the run stopped early, or false for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
bool fedsim_run_aborted(const struct FedsimRun *run);

/**
 * Global test RMSE after the round at zero-based `index`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FedsimStatus fedsim_run_round_rmse(const struct FedsimRun *run, size_t index, double *out);

/**
 * Uploads made by `client` over the whole run.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FedsimStatus fedsim_run_uploads(const struct FedsimRun *run, size_t client, uint32_t *out);

/**
 * The round log in rounds.csv format.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum FedsimStatus fedsim_run_rounds_csv(const struct FedsimRun *run, char **out);

/**
 * Writes rounds.csv, summary.json and curves.svg into `dir`, creating it.
 *
 * # Safety
 * `run` must be a live handle and `dir` a NUL-terminated path.
 */
enum FedsimStatus fedsim_run_write_reports(const struct FedsimRun *run, const char *dir);

/**
 * # Safety
 * `run` must be null or a live handle; it is invalid afterwards.
 */
void fedsim_run_free(struct FedsimRun *run);

/**
 * Smoothed absolute-value distribution of `len` parameters, written to `out`.
 *
 * # Safety
 * `params` and `out` must each point to `len` doubles.
 */
enum FedsimStatus fedsim_param_distribution(const double *params, size_t len, double *out);

/**
 * `KL(p || q)` of two strictly positive distributions of length `len`.
 *
 * # Safety
 * `p` and `q` must each point to `len` doubles; `out` must be valid.
 */
enum FedsimStatus fedsim_kl_divergence(const double *p, const double *q, size_t len, double *out);

/**
 * Coefficients of the parabola through `(0, alpha)`, `(m, 1)`, `(2m, alpha)`.
 *
 * # Safety
 * `b0`, `b1` and `b2` must be valid pointers.
 */
enum FedsimStatus fedsim_solve_quadratic(double alpha,
                                         size_t m,
                                         double *b0,
                                         double *b1,
                                         double *b2);

/**
 * Values carried by an FC head of the given shape: `hidden * output + output`.
 */
size_t fedsim_fc_len(size_t hidden, size_t output);

/**
 * Decodes an encoded FC head. On success `*n_values` is set; when `values`
 * is non-null and `capacity` is large enough the values are copied into it,
 * otherwise `FEDSIM_STATUS_OUT_OF_RANGE` is returned with `*n_values` set
 * so the caller can retry.
 *
 * # Safety
 * `bytes` must point to `len` bytes; `values` to `capacity` doubles or be
 * null; the remaining out-pointers must be valid.
 */
enum FedsimStatus fedsim_fc_head_decode(const uint8_t *bytes,
                                        size_t len,
                                        size_t *hidden,
                                        size_t *output,
                                        double *values,
                                        size_t capacity,
                                        size_t *n_values);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDSIM_H */
