#ifndef AEROTWIN_H
#define AEROTWIN_H

#include <stdint.h>
#include <stddef.h>
#include <stdbool.h>

typedef enum AtStatus {
  AT_STATUS_OK = 0,
  AT_STATUS_NULL_POINTER = 1,
  AT_STATUS_INVALID_ARGUMENT = 2,
  AT_STATUS_INVALID_CONFIG = 3,
  AT_STATUS_OUTPUT_NOT_EMPTY = 4,
  AT_STATUS_RUN_IN_PROGRESS = 5,
  AT_STATUS_IO = 6,
  AT_STATUS_INTERNAL = 7,
} AtStatus;

// Experiment configuration.
typedef struct AtConfig AtConfig;

// Flight plan.
typedef struct AtPlan AtPlan;

// Round-robin scheduler over a fixed cell.
typedef struct AtScheduler AtScheduler;

typedef struct AtRunSummary {
  uint64_t steps;
  uint64_t end_ms;
  uint64_t rejected_commands;
} AtRunSummary;

typedef struct AtVehicleSample {
  double latitude_deg;
  double longitude_deg;
  double altitude_m;
  double heading_deg;
} AtVehicleSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null if the last
// call succeeded. Release with [`at_string_free`].
char *at_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library that has not been freed.
void at_string_free(char *s);

// Library version as a static string.
const char *at_version(void);

// Built-in two-UE reference scenario.
//
// # Safety
// `out` must be a valid pointer.
enum AtStatus at_config_reference(struct AtConfig **out);

// Parse and validate an experiment configuration from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum AtStatus at_config_from_json(const char *json, struct AtConfig **out);

// # Safety
// `cfg` must be a handle from this library.
enum AtStatus at_config_set_seed(struct AtConfig *cfg, uint64_t seed);

// Cap the run length. A non-positive value removes the cap.
//
// # Safety
// `cfg` must be a handle from this library.
enum AtStatus at_config_set_duration(struct AtConfig *cfg, double seconds);

// Run the experiment to completion, writing logs into `out_dir`.
//
// # Safety
// `cfg` must be a handle from this library, `out_dir` a NUL-terminated
// string and `summary` null or a valid pointer.
enum AtStatus at_config_run(const struct AtConfig *cfg,
                            const char *out_dir,
                            struct AtRunSummary *summary);

// # Safety
// `cfg` must be null or a handle from this library that has not been freed.
void at_config_free(struct AtConfig *cfg);

// Parse a flight plan from its JSON form.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum AtStatus at_plan_from_json(const char *json, struct AtPlan **out);

// Copy of the flight plan inside a configuration.
//
// # Safety
// `cfg` must be a handle from this library and `out` a valid pointer.
enum AtStatus at_plan_from_config(const struct AtConfig *cfg, struct AtPlan **out);

// Seconds from launch until the vehicle reaches its terminal point.
//
// # Safety
// `plan` must be a handle from this library and `out` a valid pointer.
enum AtStatus at_plan_duration(const struct AtPlan *plan, double *out);

// Open-loop vehicle position `t` seconds after launch.
//
// # Safety
// `plan` must be a handle from this library and `out` a valid pointer.
enum AtStatus at_plan_position_at(const struct AtPlan *plan, double t, struct AtVehicleSample *out);

// # Safety
// `plan` must be null or a handle from this library that has not been freed.
void at_plan_free(struct AtPlan *plan);

// Scheduler for a cell of `n_rb` resource blocks with the default MCS table
// and the given disconnect threshold.
//
// # Safety
// `out` must be a valid pointer.
enum AtStatus at_scheduler_new(uint32_t n_rb, double disconnect_snr_db, struct AtScheduler **out);

// Schedule one subframe for `n_ue` UEs with the given SNRs. Writes the RB
// count and delivered bits of each UE into the output arrays.
//
// # Safety
// `sched` must be a handle from this library. `snr_db` must point to `n_ue`
// readable values; `rb_out` and `bits_out` to `n_ue` writable values each.
enum AtStatus at_scheduler_schedule(struct AtScheduler *sched,
                                    const double *snr_db,
                                    uintptr_t n_ue,
                                    uint32_t *rb_out,
                                    uint64_t *bits_out);

// # Safety
// `sched` must be null or a handle from this library that has not been freed.
void at_scheduler_free(struct AtScheduler *sched);

// Great-circle ground distance in meters.
//
// # Safety
// `out` must be a valid pointer.
enum AtStatus at_haversine_m(double lat1, double lon1, double lat2, double lon2, double *out);

// Straight-line distance in meters between two points with altitudes.
//
// # Safety
// `out` must be a valid pointer.
enum AtStatus at_slant_m(double lat1,
                         double lon1,
                         double alt1,
                         double lat2,
                         double lon2,
                         double alt2,
                         double *out);

// Free-space path loss in dB.
//
// # Safety
// `out` must be a valid pointer.
enum AtStatus at_fspl_db(double distance_m, double freq_mhz, double *out);

// Bits per symbol of the scheme chosen by the default MCS table at `snr_db`,
// or 0 when the link is below `disconnect_snr_db`.
//
// # Safety
// `out` must be a valid pointer.
enum AtStatus at_select_mcs(double snr_db, double disconnect_snr_db, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AEROTWIN_H */
