/* C interface to the fbopt solver. All handles are opaque; every call that can
   fail returns an fbopt_status and leaves a message in fbopt_last_error(). */
#ifndef FBOPT_H
#define FBOPT_H

#include <stddef.h>

#if defined(_WIN32)
#define FBOPT_API __declspec(dllexport)
#else
#define FBOPT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fbopt_status {
  FBOPT_OK = 0,
  FBOPT_ERR_INVALID_ARGUMENT = 1,
  FBOPT_ERR_CONFIG = 2,
  FBOPT_ERR_GRID_MISMATCH = 3,
  FBOPT_ERR_NO_BOUNDARY = 4,
  FBOPT_ERR_EMPTY_POSITIVITY = 5,
  FBOPT_ERR_UNDERPOWERED = 6,
  FBOPT_ERR_INSTABILITY = 7,
  FBOPT_ERR_STEP_FAILURE = 8,
  FBOPT_ERR_NOT_SATURABLE = 9,
  FBOPT_ERR_IO = 10,
  FBOPT_ERR_CORRUPT_CHECKPOINT = 11,
  FBOPT_ERR_VERIFICATION = 12, /* run finished, some check failed; artifacts written */
  FBOPT_ERR_INTERNAL = 13
} fbopt_status;

typedef struct fbopt_field fbopt_field;
typedef struct fbopt_domain fbopt_domain;

typedef struct fbopt_penalty {
  double sigma;
  double delta;
  double eps;
  double p;
} fbopt_penalty;

typedef struct fbopt_energy {
  double dirichlet;
  double obstacle;
  double volume;
  double total;
  double grad_max;
  double smoothed_measure;
} fbopt_energy;

typedef struct fbopt_solve_report {
  fbopt_energy energy;
  double volume_outside;
  double lip_estimate;
  double grad_norm;
  int iters;
  int converged;
} fbopt_solve_report;

typedef struct fbopt_run_result {
  int complete;
  int verify_pass;
  int stages_done;
} fbopt_run_result;

FBOPT_API const char* fbopt_version(void);
/* Message of the last failure on the calling thread, "" if none. */
FBOPT_API const char* fbopt_last_error(void);
/* Process exit code for a status: 0 ok, 1 verification, 2 input, 3 solver. */
FBOPT_API int fbopt_exit_code(fbopt_status status);
FBOPT_API fbopt_status fbopt_set_threads(int n);

FBOPT_API fbopt_status fbopt_field_create(int nx, int ny, double h, double ox, double oy, fbopt_field** out);
FBOPT_API fbopt_status fbopt_field_load(const char* path, fbopt_field** out);
FBOPT_API fbopt_status fbopt_field_save(const fbopt_field* f, const char* path);
FBOPT_API void fbopt_field_free(fbopt_field* f);
FBOPT_API fbopt_status fbopt_field_shape(const fbopt_field* f, int* nx, int* ny, double* h, double* ox, double* oy);
/* Row-major copies, n must equal nx*ny. */
FBOPT_API fbopt_status fbopt_field_get_values(const fbopt_field* f, double* out, size_t n);
FBOPT_API fbopt_status fbopt_field_set_values(fbopt_field* f, const double* in, size_t n);

/* Disk room with a plateau obstacle on the grid over bbox = {xmin, ymin, xmax, ymax}. */
FBOPT_API fbopt_status fbopt_domain_radial(const double bbox[4], double h, double cx, double cy, double omega_radius,
                                           double r0, double M, double w, double gamma, fbopt_domain** out);
FBOPT_API fbopt_status fbopt_domain_from_fields(const fbopt_field* mask, const fbopt_field* phi, double gamma,
                                                fbopt_domain** out);
FBOPT_API void fbopt_domain_free(fbopt_domain* d);
FBOPT_API fbopt_status fbopt_domain_phi(const fbopt_domain* d, fbopt_field** out);

FBOPT_API fbopt_status fbopt_energy_eval(const fbopt_domain* d, const fbopt_field* u, const fbopt_penalty* params,
                                         fbopt_energy* out);
/* Minimizes the penalized energy from u0 with default solver options;
   max_iters or tol_grad <= 0 keep their defaults. */
FBOPT_API fbopt_status fbopt_minimize(const fbopt_domain* d, const fbopt_field* u0, const fbopt_penalty* params,
                                      int max_iters, double tol_grad, fbopt_field** out, fbopt_solve_report* report);

/* Experiment pipeline. output_dir may be NULL (config's dir is used);
   stop_after_stage < 0 runs to the end. */
FBOPT_API fbopt_status fbopt_run(const char* config_path, const char* output_dir, int stop_after_stage, int quiet,
                                 fbopt_run_result* out);
FBOPT_API fbopt_status fbopt_resume(const char* dir, int stop_after_stage, int quiet, fbopt_run_result* out);
FBOPT_API fbopt_status fbopt_report(const char* dir, int quiet, int* verify_pass);
FBOPT_API fbopt_status fbopt_oracle(const double bbox[4], double h, double cx, double cy, double omega_radius,
                                    double r0, double M, double w, double gamma, const char* dir);

#ifdef __cplusplus
}
#endif

#endif
