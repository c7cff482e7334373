#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fbopt/energy.hpp"
#include "fbopt/geometry.hpp"
#include "fbopt/penalties.hpp"

namespace fbopt {

struct SolveOptions {
  int max_iters = 20000;
  double tol_grad = 1e-4;     // scaled sup-norm of the energy gradient
  double tol_energy = 1e-14;  // relative energy decrease regarded as stagnation
  int stall_window = 200;     // consecutive stagnant iterations before stopping
  double step0 = 1e-2;        // largest nodal change of the first trial step
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int lbfgs_memory = 12;      // 0 selects Barzilai-Borwein gradient descent
  double volume_tau = 0.0;    // threshold for SolveReport::volume_outside
  bool precondition = true;   // Jacobi scaling of the initial inverse Hessian
  double precond_floor = 1e-3;  // lower bound on the Dirichlet diagonal, relative to its largest entry
  bool newton = true;         // minimize: truncated Newton-CG directions instead of L-BFGS
  int cg_max_iters = 300;

  void validate() const;
};

struct SolveReport {
  EnergyBreakdown energy;
  double volume_outside = 0.0;  // h^2 #{outside nodes with u > volume_tau}
  double lip_estimate = 0.0;    // max cell |grad u|
  int iters = 0;
  double grad_norm = 0.0;
  bool converged = false;       // grad_norm <= tol_grad
  std::string stop_reason;
};

struct MinimizeResult {
  ScalarField u;
  SolveReport report;
  std::vector<double> energy_trace;  // total energy after each accepted step
};

/// Generic smooth-ish objective: returns f(x) and writes df/dx into `grad`.
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> grad)>;
/// Stationarity measure evaluated at an iterate with its gradient.
using StationarityFn = std::function<double(std::span<const double> x, std::span<const double> grad)>;
/// Writes a positive curvature estimate per entry (already floored).
using DiagonalFn = std::function<void(std::span<const double> x, std::span<double> diag)>;

struct DescentResult {
  std::vector<double> x;
  double f = 0.0;
  int iters = 0;
  double measure = 0.0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> trace;
};

/// Limited-memory BFGS (or BB gradient descent) with Armijo backtracking over
/// the entries where `free_mask` is nonzero. A non-empty `diagonal` scales
/// the initial inverse Hessian when opts.precondition is set.
DescentResult descend(std::vector<double> x0, const ObjectiveFn& f, const StationarityFn& measure,
                      std::span<const unsigned char> free_mask, const SolveOptions& opts,
                      const DiagonalFn& diagonal = {});

/// Minimal-norm one-sided gradient of J_{sigma,delta,eps}. Outside nodes at
/// the h_delta kink u = 0 take the derivative of the side that descends (0 if
/// neither does). When the outside measure lies within h^2 of gamma, f_eps' is
/// replaced by the value in [eps, 1/eps] minimizing the sup norm.
ScalarField penalized_pseudo_gradient(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params);

/// sup |pseudo-gradient| / (h^2 max(1, G^{p-1})), G the largest cell |grad u|.
double penalized_stationarity(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params);

MinimizeResult minimize(const ScalarField& u0, const DomainSpec& domain, const PenaltyParams& params,
                        const SolveOptions& opts);

struct Ball {
  Point center;
  double radius = 0.0;
};

/// Replaces u inside the ball by the discrete minimizer of the Dirichlet
/// energy with all other nodes frozen.
ScalarField p_harmonic_replacement(const ScalarField& u, const Ball& ball, double p, const SolveOptions& opts);

struct ContinuationSchedule {
  std::vector<double> sigmas;  // strictly decreasing
  std::vector<double> deltas;  // strictly decreasing
  std::vector<double> ps;      // strictly increasing
  double eps = 0.1;

  /// Throws Config on empty or non-monotone lists, non-positive values or p < 2.
  void validate() const;
  /// Number of (sigma, delta) stages; the shorter list is padded with its last value.
  std::size_t stage_count() const;
  std::pair<double, double> stage(std::size_t k) const;
};

struct StageReport {
  std::string kind;  // "continuation", "eps", "p"
  PenaltyParams params;
  SolveReport report;
};

struct ContinuationResult {
  ScalarField u;
  std::vector<StageReport> trace;
};

/// Warm-started minimize calls over the (sigma, delta) stages at (eps, ps[0]).
/// Starts from `u0` or, when empty, from phi.
ContinuationResult run_continuation(const DomainSpec& domain, const ContinuationSchedule& schedule,
                                    const SolveOptions& opts, const ScalarField* u0 = nullptr);

struct TuneResult {
  double eps_star = 0.0;
  ScalarField u;
  std::vector<StageReport> trace;
};

/// Halves eps (warm-starting each solve at the final sigma/delta and ps[0])
/// until |volume_outside - gamma| <= target_tol * gamma.
TuneResult tune_epsilon(const DomainSpec& domain, const ContinuationSchedule& schedule, double target_tol,
                        const SolveOptions& opts, const ScalarField& u_start, double eps_min = 1e-10);

/// Throws Config when gamma exceeds the outside area the grid can hold.
void check_volume_feasible(const DomainSpec& domain);

struct SweepResult {
  std::vector<ScalarField> u_list;
  ScalarField u_inf;
  std::vector<StageReport> trace;
};

/// Solves at every p of the schedule at the final sigma/delta and schedule.eps,
/// each warm-started from the previous exponent.
SweepResult p_sweep(const DomainSpec& domain, const ContinuationSchedule& schedule, const SolveOptions& opts,
                    const ScalarField& u_start);

}  // namespace fbopt
