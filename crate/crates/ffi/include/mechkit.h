#ifndef MECHKIT_H
#define MECHKIT_H

/* Generated by cbindgen from mechkit-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum MkStatus {
  MK_STATUS_OK = 0,
  MK_STATUS_INVALID_ARGUMENT = 1,
  MK_STATUS_PARSE_ERROR = 2,
  MK_STATUS_EVAL_ERROR = 3,
  MK_STATUS_SINGULAR_MATRIX = 4,
  MK_STATUS_SINGULAR_LAGRANGIAN = 5,
  MK_STATUS_OFF_CONSTRAINT = 6,
  MK_STATUS_INTEGRATION_ERROR = 7,
  MK_STATUS_VALIDATION_ERROR = 8,
  MK_STATUS_UNKNOWN_SYSTEM = 9,
  MK_STATUS_UTF8_ERROR = 10,
  MK_STATUS_INTERNAL_ERROR = 11,
} MkStatus;

/**
 * Opaque handle to a validated system.
 */
typedef struct MkSystem MkSystem;

/**
 * Opaque handle to an integrated trajectory.
 */
typedef struct MkTrajectory MkTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null.
 * The pointer stays valid until the next failing call on the same thread;
 * do not free it.
 */
const char *mk_last_error_message(void);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by a `mk_*` function that
 * documents `mk_string_free`, or null.
 */
void mk_string_free(char *s);

/**
 * JSON array of registry entries (`[{"id": ..., "formalism": ...}]`).
 * Free with [`mk_string_free`].
 */
char *mk_registry_list_json(void);

/**
 * Build a system from a JSON document in the system-file schema.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be a valid
 * pointer to receive the handle.
 */
enum MkStatus mk_system_from_json(const char *json, struct MkSystem **out);

/**
 * Build a system from a registry id.
 *
 * # Safety
 * `id` must be a valid NUL-terminated string; `out` must be valid.
 */
enum MkStatus mk_system_from_registry(const char *id, struct MkSystem **out);

/**
 * Free a system handle.
 *
 * # Safety
 * `sys` must come from `mk_system_from_*`, or be null.
 */
void mk_system_free(struct MkSystem *sys);

/**
 * Number of integration state components (time is bound separately).
 *
 * # Safety
 * `sys` must be a live handle; `out` must be valid.
 */
enum MkStatus mk_system_state_dim(const struct MkSystem *sys, uintptr_t *out);

/**
 * JSON array of state component names, in state order.
 * Free with [`mk_string_free`].
 *
 * # Safety
 * `sys` must be a live handle.
 */
char *mk_system_state_names_json(const struct MkSystem *sys);

/**
 * Write the default initial state into `buf` (length `len` must equal the
 * state dimension).
 *
 * # Safety
 * `sys` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum MkStatus mk_system_initial_state(const struct MkSystem *sys, double *buf, uintptr_t len);

/**
 * Evaluate the dynamical vector field at `(t, state)`; writes the state
 * derivative into `out` (same length as the state).
 *
 * # Safety
 * `sys` must be a live handle; `state` and `out` must point to `len`
 * doubles (readable / writable respectively).
 */
enum MkStatus mk_derive(const struct MkSystem *sys,
                        double t,
                        const double *state,
                        uintptr_t len,
                        double *out);

/**
 * Integrate a trajectory from the system's initial state over `[t0, t1]`
 * with output spacing `dt_out` and integrator tolerance `tol`
 * (`tol <= 0` selects the default `1e-10`).
 *
 * # Safety
 * `sys` must be a live handle; `out` must be valid.
 */
enum MkStatus mk_simulate(const struct MkSystem *sys,
                          double t0,
                          double t1,
                          double dt_out,
                          double tol,
                          struct MkTrajectory **out);

/**
 * Number of samples in a trajectory.
 *
 * # Safety
 * `traj` must be a live handle.
 */
uintptr_t mk_trajectory_len(const struct MkTrajectory *traj);

/**
 * State dimension of a trajectory.
 *
 * # Safety
 * `traj` must be a live handle.
 */
uintptr_t mk_trajectory_state_dim(const struct MkTrajectory *traj);

/**
 * Copy the sample times into `buf` (`len` must equal the trajectory
 * length).
 *
 * # Safety
 * `traj` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum MkStatus mk_trajectory_times(const struct MkTrajectory *traj, double *buf, uintptr_t len);

/**
 * Copy the states row-major into `buf` (`len` must equal
 * `trajectory length * state dimension`).
 *
 * # Safety
 * `traj` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum MkStatus mk_trajectory_states(const struct MkTrajectory *traj, double *buf, uintptr_t len);

/**
 * Free a trajectory handle.
 *
 * # Safety
 * `traj` must come from `mk_simulate`, or be null.
 */
void mk_trajectory_free(struct MkTrajectory *traj);

/**
 * Run the invariant battery over `[t0, t1]` and return the report as JSON.
 * `pass` receives 1 if every check passed. Free the string with
 * [`mk_string_free`].
 *
 * # Safety
 * `sys` must be a live handle; `out_json` and `pass` must be valid.
 */
enum MkStatus mk_check_json(const struct MkSystem *sys,
                            double t0,
                            double t1,
                            char **out_json,
                            int32_t *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MECHKIT_H */
