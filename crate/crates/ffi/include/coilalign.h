/* C interface to the coilalign RFID coil-alignment toolkit. */

#ifndef COILALIGN_H
#define COILALIGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a C API call. Mirrors the CLI exit codes where they overlap.
typedef enum CaStatus {
  CA_OK = 0,
  // Scenario or grid configuration rejected.
  CA_CONFIG_ERROR = 2,
  // Log/GPS data missing, malformed, or insufficient.
  CA_DATA_ERROR = 3,
  // The estimate completed but is ambiguous (no side prior).
  CA_AMBIGUOUS = 4,
  // A required pointer argument was null.
  CA_NULL_ARGUMENT = 5,
  // A string argument was not valid UTF-8.
  CA_INVALID_UTF8 = 6,
} CaStatus;

// Opaque read-log handle.
typedef struct CaReadLog CaReadLog;

// Opaque scenario handle.
typedef struct CaScenario CaScenario;

// Flat estimate result for C callers. Optional members pair with a
// `has_*` flag; unset members are zeroed.
typedef struct CaEstimate {
  double best_x;
  double best_y;
  double best_z;
  double best_likelihood;
  bool has_mirror;
  double mirror_x;
  double mirror_y;
  double mirror_z;
  double mirror_likelihood;
  // Two near-equal peaks and no side prior.
  bool ambiguous;
  bool has_misalignment;
  double lateral_m;
  double vertical_m;
  uint64_t reads_used;
} CaEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the most recent error message for this thread into `buf` (at most
// `len - 1` bytes plus a NUL). Returns the number of message bytes copied,
// or 0 when there is no pending error or no room.
//
// # Safety
// `buf` must point to `len` writable bytes, or be null (returns 0).
size_t ca_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *ca_version(void);

// Load and validate a scenario JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be a valid pointer.
// On success `*out` owns a scenario that must be released with
// [`ca_scenario_free`].
enum CaStatus ca_scenario_load_file(const char *path, struct CaScenario **out);

// Load and validate a scenario from a JSON string.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid. See
// [`ca_scenario_load_file`].
enum CaStatus ca_scenario_load_json(const char *json, struct CaScenario **out);

// Replace the scenario's run seed.
//
// # Safety
// `scenario` must be a live handle from a `ca_scenario_load_*` call.
enum CaStatus ca_scenario_set_seed(struct CaScenario *scenario, uint64_t seed);

// True antenna start position of the scenario trajectory (the simulation
// ground truth), for scoring estimates.
//
// # Safety
// `scenario` must be live; `x`, `y`, `z` must be valid pointers.
enum CaStatus ca_scenario_true_start(const struct CaScenario *scenario,
                                     double *x,
                                     double *y,
                                     double *z);

// Release a scenario handle. Null is a no-op.
//
// # Safety
// `scenario` must be null or a pointer previously returned by a
// `ca_scenario_load_*` call, and must not be used afterwards.
void ca_scenario_free(struct CaScenario *scenario);

// Simulate the scenario's reader log.
//
// # Safety
// `scenario` must be live; `out` must be valid. On success `*out` owns a
// log handle to release with [`ca_read_log_free`].
enum CaStatus ca_simulate(const struct CaScenario *scenario, struct CaReadLog **out);

// Parse a read-log CSV file. With `lenient` set, malformed rows are
// skipped and counted instead of failing the load.
//
// # Safety
// `path` must be NUL-terminated; `out` must be valid. See [`ca_simulate`].
enum CaStatus ca_read_log_load_file(const char *path, bool lenient, struct CaReadLog **out);

// Write a read log as CSV.
//
// # Safety
// `log` must be live; `path` must be NUL-terminated.
enum CaStatus ca_read_log_save_file(const struct CaReadLog *log, const char *path);

// Number of reads in the log; 0 for null.
//
// # Safety
// `log` must be null or a live handle.
uint64_t ca_read_log_len(const struct CaReadLog *log);

// Rows skipped by the most recent lenient load of this handle.
//
// # Safety
// `log` must be null or a live handle.
uint64_t ca_read_log_skipped_rows(const struct CaReadLog *log);

// Release a read-log handle. Null is a no-op.
//
// # Safety
// `log` must be null or a pointer returned by this library, unused after.
void ca_read_log_free(struct CaReadLog *log);

// Estimate the antenna start position from a read log, using the
// scenario's own trajectory. An ambiguous result still returns `CaOk`;
// check the `ambiguous` member.
//
// # Safety
// All handles must be live; `out` must point to writable memory.
enum CaStatus ca_estimate(const struct CaScenario *scenario,
                          const struct CaReadLog *log,
                          struct CaEstimate *out);

// Estimate using a GPS track file for the trajectory (field replay).
//
// # Safety
// As [`ca_estimate`]; `gps_path` must be NUL-terminated.
enum CaStatus ca_replay(const struct CaScenario *scenario,
                        const char *gps_path,
                        const struct CaReadLog *log,
                        struct CaEstimate *out);

// Euclidean distance between an estimate and a reference position, for
// convenience when scoring against [`ca_scenario_true_start`].
double ca_estimate_error(const struct CaEstimate *est, double x, double y, double z);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COILALIGN_H */
