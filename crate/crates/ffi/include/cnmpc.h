#ifndef CNMPC_H
#define CNMPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CNMPC_STATE_DIM 8

#define CNMPC_INPUT_DIM 3

typedef enum CnmpcStatus {
  CNMPC_STATUS_OK = 0,
  CNMPC_STATUS_NULL_POINTER = 1,
  CNMPC_STATUS_INVALID_ARGUMENT = 2,
  CNMPC_STATUS_SOLVER_ABORT = 3,
  CNMPC_STATUS_UNKNOWN_SCENARIO = 4,
  CNMPC_STATUS_IO = 5,
  CNMPC_STATUS_PANIC = 6,
} CnmpcStatus;

/**
 * Opaque controller handle.
 */
typedef struct CnmpcController CnmpcController;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `len`). Returns the full message length without the NUL, or 0
 * when no error has been recorded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cnmpc_last_error_message(char *buf, size_t len);

/**
 * Creates a controller with the default configuration and stores it in
 * `*out`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum CnmpcStatus cnmpc_controller_new(struct CnmpcController **out);

/**
 * Releases a controller. Null is ignored.
 *
 * # Safety
 * `handle` must be null or come from [`cnmpc_controller_new`] and not have
 * been freed.
 */
void cnmpc_controller_free(struct CnmpcController *handle);

/**
 * Sets the number of penalty rounds per solve. Drops any held warm start.
 *
 * # Safety
 * `handle` must be a live controller handle.
 */
enum CnmpcStatus cnmpc_controller_set_penalty_iterations(struct CnmpcController *handle,
                                                         size_t rounds);

/**
 * Adds a vertical cylinder centered at `(cx, cy, cz)`.
 *
 * # Safety
 * `handle` must be a live controller handle.
 */
enum CnmpcStatus cnmpc_controller_add_obstacle(struct CnmpcController *handle,
                                               double cx,
                                               double cy,
                                               double cz,
                                               double radius,
                                               double height);

/**
 * # Safety
 * `handle` must be a live controller handle.
 */
enum CnmpcStatus cnmpc_controller_clear_obstacles(struct CnmpcController *handle);

/**
 * Forgets the warm start so the next step starts from hover inputs.
 *
 * # Safety
 * `handle` must be a live controller handle.
 */
enum CnmpcStatus cnmpc_controller_reset(struct CnmpcController *handle);

/**
 * Solves one control step and writes the inputs to apply into
 * `out_inputs`.
 *
 * # Safety
 * `handle` must be a live controller handle. `states` and `references` must
 * point to `n_agents * CNMPC_STATE_DIM` readable doubles, `prev_inputs` to
 * `n_agents * CNMPC_INPUT_DIM` readable doubles and `out_inputs` to as many
 * writable doubles.
 */
enum CnmpcStatus cnmpc_controller_step(struct CnmpcController *handle,
                                       size_t n_agents,
                                       const double *states,
                                       const double *prev_inputs,
                                       const double *references,
                                       double *out_inputs);

/**
 * Runs a built-in scenario (or a scenario file) and writes its logs to
 * `out_dir`.
 *
 * # Safety
 * `scenario` and `out_dir` must be valid NUL-terminated UTF-8 strings.
 */
enum CnmpcStatus cnmpc_run_scenario(const char *scenario, uint64_t seed, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CNMPC_H */
