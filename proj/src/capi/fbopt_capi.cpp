#include "fbopt/fbopt.h"

#include <exception>
#include <new>
#include <string>

#include "fbopt/energy.hpp"
#include "fbopt/error.hpp"
#include "fbopt/geometry.hpp"
#include "fbopt/parallel.hpp"
#include "fbopt/pipeline.hpp"
#include "fbopt/solver.hpp"

struct fbopt_field {
  fbopt::ScalarField f;
};

struct fbopt_domain {
  fbopt::DomainSpec d;
};

namespace {

thread_local std::string last_error;

fbopt_status to_status(fbopt::ErrorKind k) {
  using fbopt::ErrorKind;
  switch (k) {
    case ErrorKind::InvalidArgument: return FBOPT_ERR_INVALID_ARGUMENT;
    case ErrorKind::Config: return FBOPT_ERR_CONFIG;
    case ErrorKind::GridMismatch: return FBOPT_ERR_GRID_MISMATCH;
    case ErrorKind::NoBoundary: return FBOPT_ERR_NO_BOUNDARY;
    case ErrorKind::EmptyPositivity: return FBOPT_ERR_EMPTY_POSITIVITY;
    case ErrorKind::Underpowered: return FBOPT_ERR_UNDERPOWERED;
    case ErrorKind::Instability: return FBOPT_ERR_INSTABILITY;
    case ErrorKind::StepFailure: return FBOPT_ERR_STEP_FAILURE;
    case ErrorKind::NotSaturable: return FBOPT_ERR_NOT_SATURABLE;
    case ErrorKind::Io: return FBOPT_ERR_IO;
    case ErrorKind::CorruptCheckpoint: return FBOPT_ERR_CORRUPT_CHECKPOINT;
  }
  return FBOPT_ERR_INTERNAL;
}

fbopt_status set_error(fbopt_status s, const char* msg) {
  last_error = msg;
  return s;
}

template <class F>
fbopt_status guard(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const fbopt::Error& e) {
    return set_error(to_status(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(FBOPT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(FBOPT_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(FBOPT_ERR_INTERNAL, "unknown exception");
  }
}

#define FBOPT_REQUIRE_ARG(cond) \
  if (!(cond)) return set_error(FBOPT_ERR_INVALID_ARGUMENT, "invalid argument: " #cond)

fbopt_energy to_c(const fbopt::EnergyBreakdown& e) {
  return {e.dirichlet, e.obstacle, e.volume, e.total, e.grad_max, e.smoothed_measure};
}

fbopt_status finish_run(const fbopt::RunOutcome& r, fbopt_run_result* out) {
  if (out) *out = {r.complete ? 1 : 0, r.verify_pass ? 1 : 0, r.stages_done};
  if (r.complete && !r.verify_pass) return set_error(FBOPT_ERR_VERIFICATION, "verification failed");
  return FBOPT_OK;
}

}  // namespace

extern "C" {

const char* fbopt_version(void) { return "0.1.0"; }

const char* fbopt_last_error(void) { return last_error.c_str(); }

int fbopt_exit_code(fbopt_status status) {
  switch (status) {
    case FBOPT_OK: return 0;
    case FBOPT_ERR_VERIFICATION: return 1;
    case FBOPT_ERR_INVALID_ARGUMENT:
    case FBOPT_ERR_CONFIG:
    case FBOPT_ERR_GRID_MISMATCH:
    case FBOPT_ERR_IO:
    case FBOPT_ERR_CORRUPT_CHECKPOINT:
      return 2;
    default:
      return 3;
  }
}

fbopt_status fbopt_set_threads(int n) {
  FBOPT_REQUIRE_ARG(n >= 1);
  return guard([&] {
    fbopt::set_thread_count(n);
    return FBOPT_OK;
  });
}

fbopt_status fbopt_field_create(int nx, int ny, double h, double ox, double oy, fbopt_field** out) {
  FBOPT_REQUIRE_ARG(out);
  *out = nullptr;
  return guard([&] {
    *out = new fbopt_field{fbopt::ScalarField(fbopt::Grid(nx, ny, h, {ox, oy}), 0.0)};
    return FBOPT_OK;
  });
}

fbopt_status fbopt_field_load(const char* path, fbopt_field** out) {
  FBOPT_REQUIRE_ARG(path && out);
  *out = nullptr;
  return guard([&] {
    *out = new fbopt_field{fbopt::load_field(path)};
    return FBOPT_OK;
  });
}

fbopt_status fbopt_field_save(const fbopt_field* f, const char* path) {
  FBOPT_REQUIRE_ARG(f && path);
  return guard([&] {
    fbopt::save_field(path, f->f);
    return FBOPT_OK;
  });
}

void fbopt_field_free(fbopt_field* f) { delete f; }

fbopt_status fbopt_field_shape(const fbopt_field* f, int* nx, int* ny, double* h, double* ox, double* oy) {
  FBOPT_REQUIRE_ARG(f);
  const fbopt::Grid& g = f->f.grid();
  if (nx) *nx = g.nx();
  if (ny) *ny = g.ny();
  if (h) *h = g.h();
  if (ox) *ox = g.origin().x;
  if (oy) *oy = g.origin().y;
  return FBOPT_OK;
}

fbopt_status fbopt_field_get_values(const fbopt_field* f, double* out, size_t n) {
  FBOPT_REQUIRE_ARG(f && out && n == f->f.size());
  const auto v = f->f.values();
  std::copy(v.begin(), v.end(), out);
  return FBOPT_OK;
}

fbopt_status fbopt_field_set_values(fbopt_field* f, const double* in, size_t n) {
  FBOPT_REQUIRE_ARG(f && in && n == f->f.size());
  std::copy(in, in + n, f->f.values().begin());
  return FBOPT_OK;
}

fbopt_status fbopt_domain_radial(const double bbox[4], double h, double cx, double cy, double omega_radius, double r0,
                                 double M, double w, double gamma, fbopt_domain** out) {
  FBOPT_REQUIRE_ARG(bbox && out);
  *out = nullptr;
  return guard([&] {
    const fbopt::Grid grid = fbopt::build_grid({bbox[0], bbox[1], bbox[2], bbox[3]}, h);
    fbopt::DomainSpec d = fbopt::make_radial_domain(grid, {{cx, cy}, omega_radius, r0, M, w}, gamma);
    *out = new fbopt_domain{std::move(d)};
    return FBOPT_OK;
  });
}

fbopt_status fbopt_domain_from_fields(const fbopt_field* mask, const fbopt_field* phi, double gamma, fbopt_domain** out) {
  FBOPT_REQUIRE_ARG(mask && phi && out);
  *out = nullptr;
  return guard([&] {
    fbopt::DomainSpec d;
    d.omega_mask = mask->f;
    d.phi = phi->f;
    d.gamma = gamma;
    fbopt::validate_domain(d);
    *out = new fbopt_domain{std::move(d)};
    return FBOPT_OK;
  });
}

void fbopt_domain_free(fbopt_domain* d) { delete d; }

fbopt_status fbopt_domain_phi(const fbopt_domain* d, fbopt_field** out) {
  FBOPT_REQUIRE_ARG(d && out);
  *out = nullptr;
  return guard([&] {
    *out = new fbopt_field{d->d.phi};
    return FBOPT_OK;
  });
}

fbopt_status fbopt_energy_eval(const fbopt_domain* d, const fbopt_field* u, const fbopt_penalty* params,
                               fbopt_energy* out) {
  FBOPT_REQUIRE_ARG(d && u && params && out);
  return guard([&] {
    const fbopt::PenaltyParams pp{params->sigma, params->delta, params->eps, params->p, d->d.gamma};
    *out = to_c(fbopt::eval_penalized_energy(u->f, d->d, pp));
    return FBOPT_OK;
  });
}

fbopt_status fbopt_minimize(const fbopt_domain* d, const fbopt_field* u0, const fbopt_penalty* params, int max_iters,
                            double tol_grad, fbopt_field** out, fbopt_solve_report* report) {
  FBOPT_REQUIRE_ARG(d && u0 && params && out);
  *out = nullptr;
  return guard([&] {
    fbopt::SolveOptions opts;
    if (max_iters > 0) opts.max_iters = max_iters;
    if (tol_grad > 0.0) opts.tol_grad = tol_grad;
    const fbopt::PenaltyParams pp{params->sigma, params->delta, params->eps, params->p, d->d.gamma};
    fbopt::MinimizeResult r = fbopt::minimize(u0->f, d->d, pp, opts);
    if (report) {
      const fbopt::SolveReport& s = r.report;
      *report = {to_c(s.energy), s.volume_outside, s.lip_estimate, s.grad_norm, s.iters, s.converged ? 1 : 0};
    }
    *out = new fbopt_field{std::move(r.u)};
    return FBOPT_OK;
  });
}

fbopt_status fbopt_run(const char* config_path, const char* output_dir, int stop_after_stage, int quiet,
                       fbopt_run_result* out) {
  FBOPT_REQUIRE_ARG(config_path);
  return guard([&] {
    fbopt::RunOptions opts;
    opts.quiet = quiet != 0;
    opts.stop_after_stage = stop_after_stage;
    if (output_dir) opts.output_dir = output_dir;
    return finish_run(fbopt::run_experiment(config_path, opts), out);
  });
}

fbopt_status fbopt_resume(const char* dir, int stop_after_stage, int quiet, fbopt_run_result* out) {
  FBOPT_REQUIRE_ARG(dir);
  return guard([&] {
    fbopt::RunOptions opts;
    opts.quiet = quiet != 0;
    opts.stop_after_stage = stop_after_stage;
    return finish_run(fbopt::resume_experiment(dir, opts), out);
  });
}

fbopt_status fbopt_report(const char* dir, int quiet, int* verify_pass) {
  FBOPT_REQUIRE_ARG(dir);
  return guard([&] {
    const bool pass = fbopt::write_run_report(dir, quiet != 0);
    if (verify_pass) *verify_pass = pass ? 1 : 0;
    return pass ? FBOPT_OK : set_error(FBOPT_ERR_VERIFICATION, "verification failed");
  });
}

fbopt_status fbopt_oracle(const double bbox[4], double h, double cx, double cy, double omega_radius, double r0,
                          double M, double w, double gamma, const char* dir) {
  FBOPT_REQUIRE_ARG(bbox && dir);
  return guard([&] {
    fbopt::write_oracle({{cx, cy}, omega_radius, r0, M, w}, gamma, {bbox[0], bbox[1], bbox[2], bbox[3]}, h, dir);
    return FBOPT_OK;
  });
}

}  // extern "C"
