#ifndef PIML_PIML_H
#define PIML_PIML_H

/*
 * C interface of the multi-objective physics-informed training library.
 *
 * Every call that can fail takes a context and returns a status; the
 * context then holds a message until its next call. Strings returned
 * through char** are owned by the caller and released with
 * piml_string_free. Contexts are not thread-safe; use one per thread.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PIML_API __declspec(dllexport)
#else
#define PIML_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum piml_status {
  PIML_OK = 0,
  PIML_ERR_VALIDATION = 1, /* bad argument, config or data */
  PIML_ERR_NUMERICAL = 2,  /* non-finite values, degenerate geometry */
  PIML_ERR_IO = 3,
  PIML_ERR_INTERNAL = 4
} piml_status;

typedef enum piml_method {
  PIML_METHOD_SCALARIZED = 0,
  PIML_METHOD_TMGD = 1,
  PIML_METHOD_DCGD_CENTER = 2,
  PIML_METHOD_DCGD_AVG = 3,
  PIML_METHOD_DCGD_PROJ = 4
} piml_method;

typedef enum piml_stop {
  PIML_STOP_NONE = 0,
  PIML_STOP_STATIONARY = 1,
  PIML_STOP_GRADIENT_VANISHED = 2,
  PIML_STOP_CONFLICT_THRESHOLD = 3,
  PIML_STOP_EPOCH_LIMIT = 4
} piml_stop;

typedef struct piml_context piml_context;
typedef struct piml_experiment piml_experiment;

PIML_API const char* piml_version(void);

PIML_API piml_context* piml_context_new(void);
PIML_API void piml_context_free(piml_context* ctx);
/* Message of the last failed call on ctx, "" after a success. */
PIML_API const char* piml_last_error(const piml_context* ctx);
PIML_API void piml_string_free(char* s);

/* Gradient combination. `grads` is row-major, one row per objective. */

/* Minimum-norm point of the convex hull of the rows. weights_out has
   n_obj entries, point_out has dim; either may be NULL. */
PIML_API piml_status piml_min_norm(piml_context* ctx, const double* grads, size_t n_obj,
                                   size_t dim, double* weights_out, double* point_out);

/* Combined update direction for a data and a physics gradient. For the
   dual-cone methods a stop rule may fire, in which case the direction is
   zero and *stop_out says why. The scalarized method has no combiner. */
PIML_API piml_status piml_combine(piml_context* ctx, piml_method method, const double* g_data,
                                  const double* g_physics, size_t dim,
                                  double conflict_threshold, double gradient_threshold,
                                  double* direction_out, piml_stop* stop_out);

/* IDM acceleration; params = {v0, T0, s0, a_max, b, delta}. */
PIML_API piml_status piml_idm_acceleration(piml_context* ctx, const double* params, double v,
                                           double dv, double h, double* accel_out);

/* Experiments. Configs are JSON; overrides_json (may be NULL) is merged
   over the file as a JSON merge patch. */

PIML_API piml_status piml_experiment_load(piml_context* ctx, const char* path,
                                          const char* overrides_json, piml_experiment** out);
PIML_API piml_status piml_experiment_parse(piml_context* ctx, const char* config_json,
                                           piml_experiment** out);
PIML_API void piml_experiment_free(piml_experiment* exp);
PIML_API piml_status piml_experiment_resolved(piml_context* ctx, const piml_experiment* exp,
                                              char** json_out);

/* Commands write into the experiment's output directory and, when
   result_json is not NULL, return a short JSON summary. */

PIML_API piml_status piml_cmd_simulate(piml_context* ctx, const piml_experiment* exp,
                                       char** result_json);
PIML_API piml_status piml_cmd_calibrate(piml_context* ctx, const piml_experiment* exp,
                                        char** result_json);
PIML_API piml_status piml_cmd_train(piml_context* ctx, const piml_experiment* exp,
                                    char** result_json);
/* target: a checkpoint file or a directory of runs. data_path may be NULL
   to use the experiment's test split. */
PIML_API piml_status piml_cmd_eval(piml_context* ctx, const piml_experiment* exp,
                                   const char* target, const char* data_path,
                                   char** result_json);
PIML_API piml_status piml_cmd_sweep(piml_context* ctx, const piml_experiment* exp,
                                    char** result_json);
PIML_API piml_status piml_cmd_compare(piml_context* ctx, const piml_experiment* exp,
                                      char** result_json);
PIML_API piml_status piml_cmd_oracle(piml_context* ctx, int instances, uint64_t seed,
                                     double grid_step, char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* PIML_PIML_H */
