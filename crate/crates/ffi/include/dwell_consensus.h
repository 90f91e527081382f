#ifndef DWELL_CONSENSUS_H
#define DWELL_CONSENSUS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_ARGUMENT = 2,
  DC_STATUS_PARSE = 3,
  DC_STATUS_VALIDATION = 4,
  DC_STATUS_NUMERICAL = 5,
  DC_STATUS_IO = 6,
  DC_STATUS_BUFFER_TOO_SMALL = 7,
  DC_STATUS_PANIC = 8,
} DcStatus;

/**
 * A finished run with its certificate.
 */
typedef struct DcRun DcRun;

/**
 * A parsed and validated scenario.
 */
typedef struct DcScenario DcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *dc_last_error(void);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DcStatus dc_scenario_load(const char *path, struct DcScenario **out);

/**
 * Parses and validates scenario TOML held in memory.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DcStatus dc_scenario_from_str(const char *text, struct DcScenario **out);

/**
 * # Safety
 * `sc` must come from `dc_scenario_load`/`dc_scenario_from_str` or be null.
 */
void dc_scenario_free(struct DcScenario *sc);

/**
 * Number of agents and state dimension.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DcStatus dc_scenario_shape(const struct DcScenario *sc, size_t *agents, size_t *dim);

/**
 * Simulates and certifies the scenario. `dt <= 0` keeps the scenario's step.
 *
 * # Safety
 * `sc` must be a live scenario handle and `out` a valid pointer.
 */
enum DcStatus dc_scenario_run(const struct DcScenario *sc, double dt, struct DcRun **out);

/**
 * # Safety
 * `run` must come from `dc_scenario_run` or be null.
 */
void dc_run_free(struct DcRun *run);

/**
 * Process exit code the CLI would return for this run.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum DcStatus dc_run_exit_code(const struct DcRun *run, int32_t *out);

/**
 * # Safety
 * `run` must be a live handle and both outputs valid pointers.
 */
enum DcStatus dc_run_verdict(const struct DcRun *run, bool *certified, bool *converged);

/**
 * Final consensus error (initial error for a zero horizon).
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum DcStatus dc_run_final_error(const struct DcRun *run, double *out);

/**
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum DcStatus dc_run_sample_count(const struct DcRun *run, size_t *out);

/**
 * Copies sample `index`: its time into `t` and the agent outputs into
 * `outputs` (capacity `len`, at least the number of agents).
 *
 * # Safety
 * `run` must be a live handle; `t` valid; `outputs` valid for `len` doubles.
 */
enum DcStatus dc_run_sample(const struct DcRun *run,
                            size_t index,
                            double *t,
                            double *outputs,
                            size_t len);

/**
 * Certificate report as a JSON string; release it with `dc_string_free`.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum DcStatus dc_run_certificate_json(const struct DcRun *run, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void dc_string_free(char *s);

/**
 * Writes the run artifacts (trajectory, switches, certificate, Lyapunov
 * trace, summary) into `dir`.
 *
 * # Safety
 * `run` must be a live handle and `dir` a NUL-terminated string.
 */
enum DcStatus dc_run_write_artifacts(const struct DcRun *run, const char *dir);

/**
 * Stabilizing solution of `SP + PSᵀ − 2μ P CᵀC P + aI = 0`, written
 * row-major into `p_out` (capacity `len >= d*d`).
 *
 * # Safety
 * `p_out` must be valid for `len` doubles.
 */
enum DcStatus dc_solve_riccati(size_t d, double mu, double a, double *p_out, size_t len);

/**
 * Connectivity of the digraph with row-major `n×n` weights
 * (`weights[k*n + j]` = flow from `j` to `k`).
 *
 * # Safety
 * `weights` must be valid for `n*n` doubles; outputs valid pointers.
 */
enum DcStatus dc_topology_connected(size_t n,
                                    const double *weights,
                                    bool *connected,
                                    size_t *zero_multiplicity);

/**
 * Average dwell-time check on the connected-interval durations.
 *
 * # Safety
 * `durations` must be valid for `len` doubles (may be null when `len == 0`).
 */
enum DcStatus dc_check_adt(const double *durations, size_t len, double tau, size_t n0, bool *ok);

/**
 * Largest `τ` accepted by `dc_check_adt` (infinity when unconstrained).
 *
 * # Safety
 * `durations` must be valid for `len` doubles (may be null when `len == 0`).
 */
enum DcStatus dc_tightest_adt(const double *durations, size_t len, size_t n0, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DWELL_CONSENSUS_H */
