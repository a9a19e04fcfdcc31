#ifndef LLB_H
#define LLB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The first four match the exit codes of the command line.
typedef enum LlbStatus {
  LLB_STATUS_OK = 0,
  LLB_STATUS_CONFIG_ERROR = 1,
  LLB_STATUS_SOLVER_FAILURE = 2,
  LLB_STATUS_DISSIPATION_VIOLATION = 3,
  LLB_STATUS_NULL_POINTER = 4,
  LLB_STATUS_INVALID_ARGUMENT = 5,
  LLB_STATUS_PANIC = 6,
} LlbStatus;

// A validated simulation configuration.
typedef struct LlbConfig LlbConfig;

// The outcome of a run, including the partial trace of an aborted one.
typedef struct LlbResult LlbResult;

// One row of the energy trace.
typedef struct LlbTraceRow {
  size_t step;
  double time;
  double energy_exchange;
  double energy_internal;
  double energy_anisotropy;
  double energy_total;
  double l2_norm;
  double linf_norm;
  size_t fp_iterations;
} LlbTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parses and validates a JSON configuration. On success `*out` receives a
// handle to release with [`llb_config_free`].
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum LlbStatus llb_config_from_json(const char *json, struct LlbConfig **out);

// # Safety
// `config` must come from [`llb_config_from_json`] and not be used afterwards.
// Null is ignored.
void llb_config_free(struct LlbConfig *config);

// Runs the configured simulation to its final time. A solver failure
// returns [`LlbStatus::SolverFailure`] and still hands back the result so
// the partial trace can be inspected.
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum LlbStatus llb_simulation_run(const struct LlbConfig *config, struct LlbResult **out);

// # Safety
// `result` must come from [`llb_simulation_run`] and not be used afterwards.
// Null is ignored.
void llb_result_free(struct LlbResult *result);

// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum LlbStatus llb_result_num_rows(const struct LlbResult *result, size_t *out);

// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum LlbStatus llb_result_trace_row(const struct LlbResult *result,
                                    size_t index,
                                    struct LlbTraceRow *out);

// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum LlbStatus llb_result_num_vertices(const struct LlbResult *result, size_t *out);

// Copies the last computed field into `buffer` as `x, y, z` per vertex.
// `len` must be at least three times the vertex count.
//
// # Safety
// `result` must be a live handle and `buffer` valid for `len` writes.
enum LlbStatus llb_result_final_field(const struct LlbResult *result, double *buffer, size_t len);

// Checks that the total energy never increases beyond rounding. Returns
// [`LlbStatus::DissipationViolation`] with the count in `*violations`
// otherwise.
//
// # Safety
// `result` must be a live handle and `violations` a valid pointer.
enum LlbStatus llb_result_check_dissipation(const struct LlbResult *result, size_t *violations);

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *llb_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *llb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLB_H */
