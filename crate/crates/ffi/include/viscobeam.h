/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef VISCOBEAM_H
#define VISCOBEAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum VbStatus {
  VB_STATUS_OK = 0,
  // A required pointer argument was null.
  VB_STATUS_NULL_POINTER = 1,
  // Invalid config, benchmark name, parameters or scene.
  VB_STATUS_CONFIG = 2,
  // Newton iteration failed even after the recovery strategies.
  VB_STATUS_NONCONVERGENCE = 3,
  // Invalid or degenerate geometry (knots, curves, fits).
  VB_STATUS_GEOMETRY = 4,
  // Singular linear system or ambiguous prescribed rotation.
  VB_STATUS_SOLVE = 5,
  // Out-of-range index, non-UTF-8 string or finished simulation.
  VB_STATUS_INVALID_ARGUMENT = 6,
  // Internal panic caught at the boundary; the handle should be freed.
  VB_STATUS_PANIC = 7,
} VbStatus;

// Opaque simulation handle.
typedef struct VbSimulation VbSimulation;

// Summary of one time step.
typedef struct VbStepReport {
  size_t step;
  double t;
  size_t iterations;
  double residual;
  // 1 for a regular step, 2 when it was split after a failure.
  size_t substeps;
  // Energy dissipated during the step [J].
  double dissipation;
} VbStepReport;

// State of a probe at the current time.
typedef struct VbProbeSample {
  double t;
  double position[3];
  double displacement[3];
  // Rotation vector accumulated step by step (keeps growing past π).
  double rotation[3];
  // Cumulative dissipated energy [J].
  double dissipation;
} VbProbeSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a simulation from the text of a TOML run config (the format
// accepted by `viscobeam run`), including its probes.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum VbStatus vb_simulation_from_config(const char *toml, struct VbSimulation **out);

// Creates a builtin benchmark. `overrides` is null or a TOML table of
// parameter overrides such as `"p = 4\nn = 12\nphase = \"long-term\""`.
//
// # Safety
// `name` and a non-null `overrides` must be NUL-terminated strings; `out` must be valid.
enum VbStatus vb_simulation_from_benchmark(const char *name,
                                           const char *overrides,
                                           struct VbSimulation **out);

// Releases a handle; null is ignored.
//
// # Safety
// `sim` must come from this library and not be used afterwards.
void vb_simulation_free(struct VbSimulation *sim);

// Advances one time step. `report` may be null.
//
// On failure the simulation keeps the state of the last completed step.
//
// # Safety
// `sim` must be a live handle; a non-null `report` must be writable.
enum VbStatus vb_simulation_step(struct VbSimulation *sim, struct VbStepReport *report);

// Steps until the end time.
//
// # Safety
// `sim` must be a live handle.
enum VbStatus vb_simulation_run(struct VbSimulation *sim);

// Current time [s].
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum VbStatus vb_simulation_time(const struct VbSimulation *sim, double *out);

// Writes 1 when the end time has been reached, else 0.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum VbStatus vb_simulation_is_finished(const struct VbSimulation *sim, int32_t *out);

// Number of probes.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum VbStatus vb_simulation_probe_count(const struct VbSimulation *sim, size_t *out);

// Adds a probe at normalized parameter `u ∈ [0, 1]` of `patch`; its index
// is written to `index` when that is non-null. Add probes before stepping
// so their accumulated rotations start from the reference state.
//
// # Safety
// `sim` must be a live handle, `name` NUL-terminated; a non-null `index` must be writable.
enum VbStatus vb_simulation_add_probe(struct VbSimulation *sim,
                                      const char *name,
                                      size_t patch,
                                      double u,
                                      size_t *index);

// Current state of probe `index`.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum VbStatus vb_simulation_probe_sample(const struct VbSimulation *sim,
                                         size_t index,
                                         struct VbProbeSample *out);

// Current centroid position of `patch` at normalized parameter `u`.
//
// # Safety
// `sim` must be a live handle and `xyz` point to three writable doubles.
enum VbStatus vb_simulation_point(const struct VbSimulation *sim,
                                  size_t patch,
                                  double u,
                                  double *xyz);

// Message of the last failed call on this thread (empty if none). The
// pointer stays valid until the next failing call on the same thread.
const char *vb_last_error_message(void);

// Library version, a static NUL-terminated string.
const char *vb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VISCOBEAM_H */
