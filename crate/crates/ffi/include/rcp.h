#ifndef RCP_H
#define RCP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

typedef enum RcpClassKind {
  RCP_CLASS_KIND_CONVERGED = 0,
  RCP_CLASS_KIND_OSCILLATING = 1,
  RCP_CLASS_KIND_BLOW_UP = 2,
  RCP_CLASS_KIND_UNDETERMINED = 3,
} RcpClassKind;

typedef enum RcpSeries {
  // Sample times; the index argument is ignored.
  RCP_SERIES_TIME = 0,
  // Fair rate `R` of a link.
  RCP_SERIES_RATE = 1,
  // Aggregate arrival `y` at a link.
  RCP_SERIES_AGGREGATE = 2,
  // Flow rate `x` of a route.
  RCP_SERIES_FLOW = 3,
} RcpSeries;

typedef enum RcpStatus {
  RCP_STATUS_OK = 0,
  RCP_STATUS_NULL_POINTER = 1,
  RCP_STATUS_INVALID_UTF8 = 2,
  RCP_STATUS_PARSE = 3,
  RCP_STATUS_VALIDATION = 4,
  RCP_STATUS_DOMAIN = 5,
  RCP_STATUS_SIMULATION = 6,
  RCP_STATUS_IO = 7,
  RCP_STATUS_INTERNAL = 8,
} RcpStatus;

// Result of a stability check.
typedef struct RcpReport RcpReport;

// A validated scenario.
typedef struct RcpScenario RcpScenario;

// A simulated trajectory.
typedef struct RcpTrace RcpTrace;

// Flat view of a stability report. Fields guarded by a `has_*` flag are meaningful
// only when the flag is set; `in_scope` is false for multi-link scenarios, in which
// case every other field is zero.
typedef struct RcpReportValues {
  bool in_scope;
  double y_bar;
  double r_bar;
  double t_bar;
  size_t routes;
  double k_t_f0;
  double theorem_lhs;
  bool theorem_ok;
  bool has_constants;
  double w;
  double f1;
  double f2;
  bool has_case_a;
  double case_a_alpha_prime;
  double case_a_a_max;
  bool case_a_ok;
  bool has_case_b;
  bool case_b_ok;
  bool local_pi4_ok;
  bool has_local_pi2;
  bool local_pi2_ok;
} RcpReportValues;

// Trajectory classification; values not defined for `kind` are NaN.
typedef struct RcpClassification {
  enum RcpClassKind kind;
  double settling_time;
  double amplitude;
  double period;
  double t_fail;
} RcpClassification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next call.
const char *rcp_last_error(void);

// # Safety
// `s` must be null or a string returned by this library.
void rcp_string_free(char *s);

// Parse and validate a scenario from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum RcpStatus rcp_scenario_from_json(const char *json, struct RcpScenario **out);

// Load and validate a scenario file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RcpStatus rcp_scenario_from_path(const char *path, struct RcpScenario **out);

// # Safety
// `s` must be null or a handle from `rcp_scenario_from_*` not yet freed.
void rcp_scenario_free(struct RcpScenario *s);

// Evaluate every stability condition.
//
// # Safety
// `scenario` must be a live handle; `out` must be writable.
enum RcpStatus rcp_check(const struct RcpScenario *scenario, struct RcpReport **out);

// # Safety
// `report` must be a live handle; `out` must be writable.
enum RcpStatus rcp_report_values(const struct RcpReport *report, struct RcpReportValues *out);

// Human-readable report; free with `rcp_string_free`.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum RcpStatus rcp_report_render(const struct RcpReport *report, char **out);

// # Safety
// `r` must be null or a handle from `rcp_check` not yet freed.
void rcp_report_free(struct RcpReport *r);

// Integrate the scenario with its own simulation settings.
//
// # Safety
// `scenario` must be a live handle; `out` must be writable.
enum RcpStatus rcp_simulate(const struct RcpScenario *scenario, struct RcpTrace **out);

// # Safety
// `t` must be null or a handle from `rcp_simulate` not yet freed.
void rcp_trace_free(struct RcpTrace *t);

// Number of samples, links and routes of a trace.
//
// # Safety
// `trace` must be a live handle; each output pointer must be null or writable.
enum RcpStatus rcp_trace_dims(const struct RcpTrace *trace,
                              size_t *samples,
                              size_t *links,
                              size_t *routes);

// Borrow one series of a trace. The pointer stays valid until the trace is freed.
//
// # Safety
// `trace` must be a live handle; `data` and `len` must be writable.
enum RcpStatus rcp_trace_series(const struct RcpTrace *trace,
                                enum RcpSeries series,
                                size_t index,
                                const double **data,
                                size_t *len);

// # Safety
// `trace` must be a live handle; `out` must be writable.
enum RcpStatus rcp_trace_classification(const struct RcpTrace *trace,
                                        struct RcpClassification *out);

// Write the trace as CSV.
//
// # Safety
// `trace` must be a live handle; `path` must be a NUL-terminated string.
enum RcpStatus rcp_trace_write_csv(const struct RcpTrace *trace, const char *path);

// Equilibrium aggregate `ȳ` with queue feedback.
//
// # Safety
// `out` must be writable.
enum RcpStatus rcp_case_a_equilibrium(double capacity, double b, double sigma2, double *out);

// # Safety
// `out` must be writable.
enum RcpStatus rcp_case_a_alpha_prime(double b, double sigma2, double *out);

// Largest gain certified by the closed-form bound with queue feedback.
//
// # Safety
// `out` must be writable.
enum RcpStatus rcp_case_a_global_bound(double b, double sigma2, double *out);

// Run a sweep given as JSON text and return its CSV; free with `rcp_string_free`.
// A string `base` in the spec is resolved against `base_dir` (null for the current directory).
//
// # Safety
// `spec_json` must be a NUL-terminated string, `base_dir` null or one; `out` must be writable.
enum RcpStatus rcp_sweep_csv(const char *spec_json,
                             const char *base_dir,
                             size_t workers,
                             char **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RCP_H */
