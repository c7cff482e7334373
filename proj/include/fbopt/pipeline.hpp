#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fbopt/error.hpp"
#include "fbopt/geometry.hpp"
#include "fbopt/solver.hpp"
#include "fbopt/verify.hpp"

namespace fbopt {

struct ExperimentConfig {
  Rect bbox{-2.0, -2.0, 2.0, 2.0};
  double h = 1.0 / 64.0;

  std::string shape = "disk";  // disk | mask
  Point center;
  double omega_radius = 0.4;
  std::string mask_file;

  std::string obstacle = "plateau";  // plateau | file | zero
  double r0 = 0.1;
  double M = 0.6;
  double w = 0.1;
  std::string phi_file;

  double gamma = 0.0;

  std::vector<double> sigmas{1e-2, 1e-3, 1e-4, 1e-5};
  std::vector<double> deltas;  // resolved to absolute values
  std::vector<double> ps{4, 8, 16, 32, 64};
  bool eps_auto = true;
  double eps = 0.1;            // fixed value, or the starting value when eps_auto
  double eps_target_tol = 0.05;
  double eps_min = 1e-6;

  SolveOptions solver;

  double theta_ref = -1.0;  // negative: default_theta_ref(domain)
  double tau = -1.0;        // negative: theta_ref * h / 2
  double c_n = 0.0;
  double band_cells = 2.0;
  double tol_factor = 10.0;
  unsigned seed = 0;

  std::string output_dir = "out";

  ContinuationSchedule schedule() const;
};

/// Parses the INI-style config. Relative paths resolve against `base_dir`.
/// Deltas may carry a trailing "h" (multiples of the grid spacing). Throws
/// Config on unknown keys, bad values or unresolvable references.
ExperimentConfig parse_config(std::istream& is, const std::string& base_dir);
ExperimentConfig load_config(const std::string& path);

/// Resolved config in the same format, output section excluded; parsing it
/// back gives the same text.
void write_canonical(std::ostream& os, const ExperimentConfig& cfg);
std::string canonical_text(const ExperimentConfig& cfg);

/// FNV-1a of canonical_text.
std::uint64_t config_hash(const ExperimentConfig& cfg);

DomainSpec build_domain(const ExperimentConfig& cfg);

/// tau and theta_ref after defaults.
double resolved_tau(const ExperimentConfig& cfg, const DomainSpec& domain);

struct RunOptions {
  bool quiet = false;
  int stop_after_stage = -1;  // stop once this many stages are checkpointed
  std::string output_dir;     // overrides the config's output dir when non-empty
};

struct RunOutcome {
  bool complete = false;      // all stages solved and artifacts written
  bool verify_pass = false;
  int stages_done = 0;
};

/// run <config>: solves every stage with checkpoints, then writes fields,
/// contours, reports, tables and summary.txt under the output dir.
RunOutcome run_experiment(const std::string& config_path, const RunOptions& opts);

/// resume <dir>: continues from the last checkpoint of a run directory.
/// Throws CorruptCheckpoint on unreadable metadata or a config hash mismatch.
RunOutcome resume_experiment(const std::string& dir, const RunOptions& opts);

/// report <dir>: rebuilds contours, reports, tables and summary from the
/// saved fields. Returns the verification verdict.
bool write_run_report(const std::string& dir, bool quiet = true);

/// oracle: cone field, oracle constants and feasibility to `dir`.
void write_oracle(const RadialMeta& meta, double gamma, const Rect& bbox, double h, const std::string& dir);

/// 0 ok, 1 verification failure, 2 config/input errors, 3 solver failures.
int exit_code(ErrorKind kind);

}  // namespace fbopt
