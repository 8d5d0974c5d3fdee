#ifndef MFL_H
#define MFL_H

/* C interface to the moving-frame Langevin library.
 * Every call returns an mfl_status; on failure mfl_last_error() holds a
 * message for the calling thread. Strings returned through out-parameters
 * are owned by the library and stay valid until the owning handle is
 * destroyed or, for the flow-free helpers, until the next call on the same
 * thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MFL_API __declspec(dllexport)
#else
#define MFL_API __attribute__((visibility("default")))
#endif

typedef enum mfl_status {
  MFL_OK = 0,
  MFL_INVALID_ARGUMENT,
  MFL_HORIZON_EXCEEDED,
  MFL_OFF_MANIFOLD,
  MFL_CUT_LOCUS_AMBIGUITY,
  MFL_FRAME_NOT_ORTHONORMAL,
  MFL_STENCIL_OUT_OF_DOMAIN,
  MFL_DEGENERATE_FRAME,
  MFL_NUMERICAL_BLOWUP,
  MFL_MISSING_GRADIENT,
  MFL_DEGENERATE_INTERVAL,
  MFL_RADIUS_TOO_LARGE,
  MFL_NESTED_BUDGET_EXCEEDED,
  MFL_SIGNAL_BELOW_NOISE,
  MFL_INSUFFICIENT_SAMPLES,
  MFL_NON_POSITIVE_FIELD,
  MFL_FIELD_BELOW_ONE,
  MFL_NO_SOLUTION,
  MFL_NO_MINIMIZER,
  MFL_UNSUPPORTED_DRIFT,
  MFL_CONFIG_INVALID,
  MFL_IO_ERROR,
  MFL_INTERNAL_ERROR = 100
} mfl_status;

typedef struct mfl_flow mfl_flow;
typedef struct mfl_report mfl_report;

MFL_API const char* mfl_version(void);
MFL_API const char* mfl_status_name(mfl_status status);
/* Message of the last failed call on this thread; empty when none. */
MFL_API const char* mfl_last_error(void);

/* Flow from the "flow" object of an experiment config. */
MFL_API mfl_status mfl_flow_create(const char* flow_json, mfl_flow** out);
MFL_API void mfl_flow_destroy(mfl_flow* flow);
MFL_API mfl_status mfl_flow_dim(const mfl_flow* flow, int* dim, int* ambient_dim);
MFL_API mfl_status mfl_flow_horizon(const mfl_flow* flow, double* horizon);
/* Geodesic distance for g_t between ambient points of length ambient_dim. */
MFL_API mfl_status mfl_flow_distance(const mfl_flow* flow, double t, const double* x, const double* y,
                                     double* out);

/* Validates a config and returns its canonical JSON form. */
MFL_API mfl_status mfl_config_normalize(const char* config_json, const char** out_json);

/* Runs an experiment. A non-null seed_override replaces mc.seed. */
MFL_API mfl_status mfl_run(const char* config_json, const uint64_t* seed_override, mfl_report** out);
MFL_API void mfl_report_destroy(mfl_report* report);
MFL_API mfl_status mfl_report_json(const mfl_report* report, const char** out_json);
/* Number of results recorded as errors. */
MFL_API mfl_status mfl_report_error_count(const mfl_report* report, size_t* count);
/* Writes files for a comma-separated list of json, csv, svg. */
MFL_API mfl_status mfl_report_emit(const mfl_report* report, const char* directory, const char* formats);

#ifdef __cplusplus
}
#endif

#endif
