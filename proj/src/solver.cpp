#include "fbopt/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "fbopt/error.hpp"

namespace fbopt {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double sup_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

struct CurvaturePair {
  std::vector<double> s, y;
  double rho = 0.0;
};

// Appends (x1 - x0, g1 - g0), recycling the oldest pair's storage once the
// memory is full.
void push_pair(std::deque<CurvaturePair>& pairs, int memory, std::span<const double> x1, std::span<const double> x0,
               std::span<const double> g1, std::span<const double> g0, double sy) {
  CurvaturePair cp;
  if (pairs.size() >= static_cast<std::size_t>(memory)) {
    cp = std::move(pairs.front());
    pairs.pop_front();
  }
  const std::size_t n = x1.size();
  cp.s.resize(n);
  cp.y.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    cp.s[k] = x1[k] - x0[k];
    cp.y[k] = g1[k] - g0[k];
  }
  cp.rho = 1.0 / sy;
  pairs.push_back(std::move(cp));
}

// Two-loop recursion: d = -H g with H0 = gamma D^{-1}, gamma = s.y / (y.D^{-1}y)
// of the newest pair. An empty `inv_diag` means D = I.
void lbfgs_direction(const std::deque<CurvaturePair>& pairs, std::span<const double> g,
                     std::span<const double> inv_diag, std::vector<double>& d) {
  const std::size_t n = g.size();
  d.assign(g.begin(), g.end());
  std::vector<double> alpha(pairs.size());
  for (std::size_t i = pairs.size(); i-- > 0;) {
    const CurvaturePair& cp = pairs[i];
    alpha[i] = cp.rho * dot(cp.s, d);
    for (std::size_t k = 0; k < n; ++k) d[k] -= alpha[i] * cp.y[k];
  }
  const CurvaturePair& last = pairs.back();
  double yhy = 0.0;
  for (std::size_t k = 0; k < n; ++k) yhy += last.y[k] * last.y[k] * (inv_diag.empty() ? 1.0 : inv_diag[k]);
  const double gamma = dot(last.s, last.y) / yhy;
  for (std::size_t k = 0; k < n; ++k) d[k] *= gamma * (inv_diag.empty() ? 1.0 : inv_diag[k]);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const CurvaturePair& cp = pairs[i];
    const double beta = cp.rho * dot(cp.y, d);
    for (std::size_t k = 0; k < n; ++k) d[k] += (alpha[i] - beta) * cp.s[k];
  }
  for (double& v : d) v = -v;
}

double max_cell_gradient(std::span<const double> u, const Grid& g) {
  const int nx = g.nx();
  const double inv2h = 0.5 / g.h();
  double m2 = 0.0;
  for (int cj = 0; cj + 1 < g.ny(); ++cj)
    for (int ci = 0; ci + 1 < nx; ++ci) {
      const std::size_t k = static_cast<std::size_t>(cj) * nx + ci;
      const double a = u[k], b = u[k + 1], c = u[k + nx], d = u[k + nx + 1];
      const double gx = (b - a + d - c) * inv2h, gy = (c - a + d - b) * inv2h;
      m2 = std::max(m2, gx * gx + gy * gy);
    }
  return std::sqrt(m2);
}

double flux_scale(double grad_max, double p) { return std::max(1.0, std::pow(grad_max, p - 1.0)); }

}  // namespace

void SolveOptions::validate() const {
  require(max_iters > 0, ErrorKind::Config, "max_iters must be positive");
  require(tol_grad > 0.0 && tol_energy > 0.0 && step0 > 0.0, ErrorKind::Config,
          "solver tolerances and step0 must be positive");
  require(armijo_c > 0.0 && armijo_c < 1.0, ErrorKind::Config, "armijo_c must lie in (0,1)");
  require(backtrack > 0.0 && backtrack < 1.0, ErrorKind::Config, "backtrack must lie in (0,1)");
  require(lbfgs_memory >= 0 && stall_window > 0, ErrorKind::Config, "invalid lbfgs_memory or stall_window");
  require(cg_max_iters > 0, ErrorKind::Config, "cg_max_iters must be positive");
  require(precond_floor > 0.0, ErrorKind::Config, "precond_floor must be positive");
  require(volume_tau >= 0.0, ErrorKind::Config, "volume_tau must be nonnegative");
}

DescentResult descend(std::vector<double> x, const ObjectiveFn& f, const StationarityFn& measure,
                      std::span<const unsigned char> free_mask, const SolveOptions& opts,
                      const DiagonalFn& diagonal) {
  opts.validate();
  const std::size_t n = x.size();
  require(free_mask.empty() || free_mask.size() == n, ErrorKind::InvalidArgument, "free mask size mismatch");
  auto pin = [&](std::vector<double>& g) {
    if (free_mask.empty()) return;
    for (std::size_t k = 0; k < n; ++k)
      if (!free_mask[k]) g[k] = 0.0;
  };

  const bool precond = opts.precondition && static_cast<bool>(diagonal);
  std::vector<double> inv_diag;
  auto refresh_diagonal = [&] {
    if (!precond) return;
    inv_diag.resize(n);
    diagonal(x, inv_diag);
    for (double& v : inv_diag) v = 1.0 / std::max(v, 1e-300);
  };

  std::vector<double> g(n), xt(n), gt(n), d(n);
  double fx = f(x, g);
  require(std::isfinite(fx), ErrorKind::Instability, "objective is not finite at the starting point");
  pin(g);
  refresh_diagonal();

  DescentResult res;
  std::deque<CurvaturePair> pairs;
  double bb_step = 0.0;
  int stagnant = 0;
  bool retried = false;

  for (int it = 0;; ++it) {
    res.measure = measure(x, g);
    if (res.measure <= opts.tol_grad) {
      res.converged = true;
      res.stop_reason = "gradient tolerance reached";
      break;
    }
    if (it >= opts.max_iters) {
      res.stop_reason = "iteration limit";
      break;
    }

    auto steepest_direction = [&] {
      for (std::size_t k = 0; k < n; ++k) d[k] = -g[k] * (precond ? inv_diag[k] : 1.0);
    };
    bool steepest = pairs.empty();
    if (steepest)
      steepest_direction();
    else
      lbfgs_direction(pairs, g, inv_diag, d);
    double gd = dot(g, d);
    if (!(gd < 0.0)) {
      pairs.clear();
      steepest = true;
      steepest_direction();
      gd = dot(g, d);
    }
    if (gd == 0.0) {
      res.stop_reason = "zero gradient";
      break;
    }

    double t = 1.0;
    if (steepest) {
      if (bb_step > 0.0)
        t = bb_step;
      else
        t = std::min(precond ? 1.0 : std::numeric_limits<double>::infinity(), opts.step0 / sup_norm(d));
    }

    bool accepted = false;
    double ft = fx;
    for (int ls = 0; ls < 80; ++ls) {
      for (std::size_t k = 0; k < n; ++k) xt[k] = x[k] + t * d[k];
      ft = f(xt, gt);
      if (std::isfinite(ft) && ft <= fx + opts.armijo_c * t * gd) {
        accepted = true;
        break;
      }
      t *= opts.backtrack;
    }
    if (!accepted) {
      if (!steepest && !retried) {
        pairs.clear();
        bb_step = 0.0;
        retried = true;
        continue;
      }
      res.stop_reason = "line search stalled";
      break;
    }
    retried = false;
    pin(gt);

    double ss = 0.0, sy = 0.0, yy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double sk = xt[k] - x[k], yk = gt[k] - g[k];
      ss += sk * sk;
      sy += sk * yk;
      yy += yk * yk;
    }
    // Barzilai-Borwein seeding only drives the unpreconditioned memoryless mode.
    bb_step = (opts.lbfgs_memory == 0 && !precond && sy > 0.0) ? ss / sy : 0.0;
    if (opts.lbfgs_memory > 0 && sy > 1e-12 * std::sqrt(ss * yy))
      push_pair(pairs, opts.lbfgs_memory, xt, x, gt, g, sy);

    const double decrease = fx - ft;
    stagnant = decrease <= opts.tol_energy * std::max(1.0, std::abs(fx)) ? stagnant + 1 : 0;
    x.swap(xt);
    g.swap(gt);
    fx = ft;
    refresh_diagonal();
    res.iters = it + 1;
    res.trace.push_back(fx);
    if (stagnant >= opts.stall_window) {
      res.measure = measure(x, g);
      res.converged = res.measure <= opts.tol_grad;
      res.stop_reason = "energy stagnation";
      break;
    }
  }
  res.x = std::move(x);
  res.f = fx;
  return res;
}

namespace {

// One-sided derivative bookkeeping for the h_delta kink at u = 0 and the
// f_eps kink at measure = gamma.
class KinkModel {
 public:
  KinkModel(const DomainSpec& domain, const PenaltyParams& params)
      : domain_(domain), params_(params), hh_(domain.grid().h() * domain.grid().h()) {}

  // Fills pg from the smooth gradient `gs`; returns the f_eps slope used.
  // on_kink() reports whether that slope lies strictly inside (eps, 1/eps).
  double pseudo_gradient(std::span<const double> x, std::span<const double> gs, double measure,
                         std::span<double> pg) {
    on_kink_ = false;
    const double delta = params_.delta, a0 = hh_ / delta;
    sensitive_.clear();
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (!domain_.inside(k) && x[k] >= 0.0 && x[k] < delta)
        sensitive_.push_back(k);
      else
        pg[k] = gs[k];
    }
    double lam = f_eps(measure, params_.eps, params_.gamma).derivative;
    if (std::abs(measure - params_.gamma) <= hh_ && !sensitive_.empty()) {
      // Minimal 2-norm choice. Nodes at zero that no admissible multiplier
      // pushes down have a fixed slope and are skipped.
      varying_.clear();
      for (std::size_t k : sensitive_)
        if (!(x[k] == 0.0 && gs[k] + params_.eps * a0 >= 0.0)) varying_.push_back(k);
      auto worst = [&](double l) {
        double m = 0.0;
        for (std::size_t k : varying_) {
          const double v = slope(x[k], gs[k], l * a0);
          m += v * v;
        }
        return m;
      };
      double lo = params_.eps, hi = 1.0 / params_.eps;
      const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
      double c = hi - ratio * (hi - lo), d = lo + ratio * (hi - lo);
      double fc = worst(c), fd = worst(d);
      for (int it = 0; it < 60 && hi - lo > 1e-12 * hi; ++it) {
        if (fc <= fd) {
          hi = d, d = c, fd = fc;
          c = hi - ratio * (hi - lo), fc = worst(c);
        } else {
          lo = c, c = d, fc = fd;
          d = lo + ratio * (hi - lo), fd = worst(d);
        }
      }
      lam = 0.5 * (lo + hi);
      on_kink_ = lam > params_.eps * (1.0 + 1e-9) && lam < (1.0 - 1e-9) / params_.eps;
    }
    for (std::size_t k : sensitive_) pg[k] = slope(x[k], gs[k], lam * a0);
    return lam;
  }

  bool on_kink() const { return on_kink_; }

  // Removes the first-order change of the outside measure from d, so steps
  // slide along measure = gamma.
  void project_tangent(std::span<const double> x, std::span<double> d) const {
    double vd = 0.0;
    std::size_t count = 0;
    for (std::size_t k : sensitive_) {
      if (x[k] > 0.0 || d[k] > 0.0) {
        vd += d[k];
        ++count;
      }
    }
    if (count == 0) return;
    const double shift = vd / static_cast<double>(count);
    for (std::size_t k : sensitive_)
      if (x[k] > 0.0 || d[k] > 0.0) d[k] -= shift;
  }

  // Linear version for Krylov iterations: zero sum over the ramp nodes above 0.
  void project_fixed(std::span<const double> x, std::span<double> v) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k : sensitive_)
      if (x[k] > 0.0) sum += v[k], ++count;
    if (count == 0) return;
    const double shift = sum / static_cast<double>(count);
    for (std::size_t k : sensitive_)
      if (x[k] > 0.0) v[k] -= shift;
  }

  double hh() const { return hh_; }

 private:
  static double slope(double x, double g, double push) {
    if (x > 0.0) return g + push;
    const double right = g + push;
    if (right < 0.0) return right;
    if (g > 0.0) return g;
    return 0.0;
  }

  const DomainSpec& domain_;
  PenaltyParams params_;
  double hh_;
  std::vector<std::size_t> sensitive_, varying_;
  bool on_kink_ = false;
};

double scaled_sup(std::span<const double> pg, double hh, double grad_max, double p) {
  return sup_norm(pg) / (hh * flux_scale(grad_max, p));
}

}  // namespace

ScalarField penalized_pseudo_gradient(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params) {
  require_same_grid(u, domain.omega_mask, "penalized_pseudo_gradient");
  PenalizedEnergy energy(domain, params);
  ScalarField gs(u.grid(), 0.0), pg(u.grid(), 0.0);
  const EnergyBreakdown b = energy.evaluate(u.values(), gs.values(), false);
  KinkModel kinks(domain, params);
  kinks.pseudo_gradient(u.values(), gs.values(), b.smoothed_measure, pg.values());
  return pg;
}

double penalized_stationarity(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params) {
  const ScalarField pg = penalized_pseudo_gradient(u, domain, params);
  return scaled_sup(pg.values(), u.grid().h() * u.grid().h(), max_cell_gradient(u.values(), u.grid()), params.p);
}

MinimizeResult minimize(const ScalarField& u0, const DomainSpec& domain, const PenaltyParams& params,
                        const SolveOptions& opts) {
  params.validate();
  opts.validate();
  require_same_grid(u0, domain.omega_mask, "minimize");
  require(u0.all_finite(), ErrorKind::InvalidArgument, "initial field has non-finite values");

  const Grid& grid = domain.grid();
  const std::size_t n = grid.size();
  PenalizedEnergy energy(domain, params);
  KinkModel kinks(domain, params);
  const double hh = kinks.hh();
  const auto phi = domain.phi.values();
  std::vector<unsigned char> kinked(n);
  for (std::size_t k = 0; k < n; ++k) kinked[k] = domain.inside(k) ? 0 : 1;

  // Orthant-wise L-BFGS: curvature pairs use the smooth gradient, directions
  // and the Armijo test use the pseudo-gradient, and no node crosses u = phi
  // within one step (the h_delta kink outside, the obstacle curvature jump
  // inside).
  std::vector<double> x(u0.values().begin(), u0.values().end());
  std::vector<double> gs(n), pg(n), xt(n), gst(n), pgt(n), d(n), inv_diag(n);
  EnergyBreakdown bx = energy.evaluate(x, gs, false);
  require(std::isfinite(bx.total), ErrorKind::Instability, "energy is not finite at the starting point");
  kinks.pseudo_gradient(x, gs, bx.smoothed_measure, pg);
  auto refresh_diagonal = [&] {
    if (!opts.precondition || opts.newton) return;
    energy.hessian_diagonal(x, inv_diag, opts.precond_floor, pg);
    for (double& v : inv_diag) v = 1.0 / std::max(v, 1e-300);
  };
  refresh_diagonal();

  // Truncated Newton: preconditioned CG on (H + mu I) d = -pg over the nodes
  // not pinned at the h_delta kink.
  std::vector<double> cg_r(n), cg_z(n), cg_p(n), cg_q(n), jac(n);
  std::span<const double> scaling = opts.newton         ? std::span<const double>(jac)
                                    : opts.precondition ? std::span<const double>(inv_diag)
                                                        : std::span<const double>();
  std::vector<unsigned char> active(n);
  double damping = 1e-4;
  auto newton_direction = [&](double eta) {
    energy.hessian_diagonal(x, jac, opts.precond_floor, pg);
    const double top = *std::max_element(jac.begin(), jac.end());
    const double mu = damping * top;
    for (std::size_t k = 0; k < n; ++k) {
      active[k] = !(kinked[k] && x[k] == 0.0 && pg[k] == 0.0);
      jac[k] = 1.0 / (jac[k] + mu);
      d[k] = 0.0;
      cg_r[k] = active[k] ? -pg[k] : 0.0;
    }
    const bool tangent = kinks.on_kink();
    if (tangent) kinks.project_fixed(x, cg_r);
    auto precondition = [&] {
      for (std::size_t k = 0; k < n; ++k) cg_z[k] = cg_r[k] * jac[k];
      if (tangent) kinks.project_fixed(x, cg_z);
    };
    precondition();
    cg_p = cg_z;
    double rz = dot(cg_r, cg_z);
    const double r0 = std::sqrt(dot(cg_r, cg_r));
    for (int j = 0; j < opts.cg_max_iters && rz > 0.0; ++j) {
      energy.hessian_apply(cg_p, cg_q);
      for (std::size_t k = 0; k < n; ++k) cg_q[k] = active[k] ? cg_q[k] + mu * cg_p[k] : 0.0;
      if (tangent) kinks.project_fixed(x, cg_q);
      const double pq = dot(cg_p, cg_q);
      if (!(pq > 0.0)) {
        if (j == 0) d = cg_p;
        break;
      }
      const double alpha = rz / pq;
      for (std::size_t k = 0; k < n; ++k) {
        d[k] += alpha * cg_p[k];
        cg_r[k] -= alpha * cg_q[k];
      }
      if (std::sqrt(dot(cg_r, cg_r)) <= eta * r0) break;
      precondition();
      const double rz_new = dot(cg_r, cg_z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t k = 0; k < n; ++k) cg_p[k] = cg_z[k] + beta * cg_p[k];
    }
  };

  MinimizeResult out;
  std::deque<CurvaturePair> pairs;
  int stagnant = 0, iters = 0;
  bool retried = false, converged = false;
  double measure = 0.0;
  std::string reason;

  for (int it = 0;; ++it) {
    measure = scaled_sup(pg, hh, bx.grad_max, params.p);
    if (measure <= opts.tol_grad) {
      converged = true;
      reason = "gradient tolerance reached";
      break;
    }
    if (it >= opts.max_iters) {
      reason = "iteration limit";
      break;
    }

    bool steepest = opts.newton ? false : pairs.empty();
    auto steepest_direction = [&] {
      for (std::size_t k = 0; k < n; ++k) d[k] = -pg[k] * (scaling.empty() ? 1.0 : scaling[k]);
    };
    if (opts.newton)
      newton_direction(std::min(0.5, std::sqrt(measure)));
    else if (steepest)
      steepest_direction();
    else
      lbfgs_direction(pairs, pg, scaling, d);
    for (std::size_t k = 0; k < n; ++k)
      if ((kinked[k] || x[k] == phi[k]) && d[k] * pg[k] >= 0.0) d[k] = 0.0;
    if (kinks.on_kink()) kinks.project_tangent(x, d);
    double gd = dot(pg, d);
    if (!(gd < 0.0)) {
      pairs.clear();
      steepest = true;
      steepest_direction();
      gd = dot(pg, d);
    }
    if (gd == 0.0) {
      reason = "zero gradient";
      break;
    }

    double t = 1.0;
    if (steepest && !opts.precondition) t = opts.step0 / sup_norm(d);
    bool accepted = false;
    EnergyBreakdown bt;
    for (int ls = 0; ls < 80; ++ls) {
      double lin = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        double v = x[k] + t * d[k];
        const double side = x[k] != phi[k] ? x[k] - phi[k] : d[k];
        if ((v - phi[k]) * side < 0.0) v = phi[k];
        xt[k] = v;
        lin += pg[k] * (v - x[k]);
      }
      bt = energy.evaluate(xt, gst, false);
      if (std::isfinite(bt.total) && bt.total <= bx.total + opts.armijo_c * lin) {
        accepted = true;
        break;
      }
      t *= opts.backtrack;
    }
    if (opts.newton) damping = t == 1.0 ? std::max(damping * 0.25, 1e-10) : std::min(damping * 4.0, 1.0);
    if (!accepted) {
      if (opts.newton && !retried) {
        retried = true;
        continue;
      }
      if (!steepest && !retried) {
        pairs.clear();
        retried = true;
        continue;
      }
      reason = "line search stalled";
      break;
    }
    retried = false;

    double ss = 0.0, sy = 0.0, yy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double sk = xt[k] - x[k], yk = gst[k] - gs[k];
      ss += sk * sk;
      sy += sk * yk;
      yy += yk * yk;
    }
    if (opts.lbfgs_memory > 0 && sy > 1e-12 * std::sqrt(ss * yy))
      push_pair(pairs, opts.lbfgs_memory, xt, x, gst, gs, sy);

    const double decrease = bx.total - bt.total;
    if (decrease < 0.0) {
      std::ostringstream msg;
      msg << "step failure: energy increased at iteration " << it << " (" << bx.total << " -> " << bt.total << ")";
      fail(ErrorKind::StepFailure, msg.str());
    }
    stagnant = decrease <= opts.tol_energy * std::max(1.0, std::abs(bx.total)) ? stagnant + 1 : 0;
    x.swap(xt);
    gs.swap(gst);
    bx = bt;
    kinks.pseudo_gradient(x, gs, bx.smoothed_measure, pg);
    refresh_diagonal();
    iters = it + 1;
    out.energy_trace.push_back(bx.total);
    if (stagnant >= opts.stall_window) {
      measure = scaled_sup(pg, hh, bx.grad_max, params.p);
      converged = measure <= opts.tol_grad;
      reason = "energy stagnation";
      break;
    }
  }

  out.u = ScalarField(grid, std::move(x));
  SolveReport& rep = out.report;
  rep.energy = bx;
  rep.lip_estimate = bx.grad_max;
  rep.volume_outside = positive_volume_outside(out.u, domain, opts.volume_tau);
  rep.iters = iters;
  rep.grad_norm = measure;
  rep.converged = converged;
  rep.stop_reason = reason;
  return out;
}

ScalarField p_harmonic_replacement(const ScalarField& u, const Ball& ball, double p, const SolveOptions& opts) {
  require(p >= 2.0, ErrorKind::InvalidArgument, "p must be at least 2");
  require(ball.radius > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  const Grid& g = u.grid();
  const Rect e = g.extent();
  require(ball.center.x - ball.radius > e.xmin && ball.center.x + ball.radius < e.xmax &&
              ball.center.y - ball.radius > e.ymin && ball.center.y + ball.radius < e.ymax,
          ErrorKind::InvalidArgument, "ball must lie strictly inside the grid");

  std::vector<unsigned char> free_mask(g.size(), 0);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (distance(g.node(i, j), ball.center) < ball.radius) free_mask[g.index(i, j)] = 1;

  DomainSpec scratch;
  scratch.omega_mask = ScalarField(g, 1.0);
  scratch.phi = ScalarField(g, 0.0);
  scratch.gamma = 1.0;
  PenaltyParams params;
  params.p = p;
  PenalizedEnergy energy(scratch, params);
  ObjectiveFn f = [&](std::span<const double> x, std::span<double> grad) {
    return energy.evaluate_dirichlet(x, grad);
  };
  StationarityFn measure = [&](std::span<const double> x, std::span<const double> grad) {
    double m = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k)
      if (free_mask[k]) m = std::max(m, std::abs(grad[k]));
    return m / (g.h() * g.h() * flux_scale(max_cell_gradient(x, g), p));
  };
  std::vector<double> x0(u.values().begin(), u.values().end());
  DiagonalFn diag = [&](std::span<const double> x, std::span<double> out) { energy.hessian_diagonal(x, out, opts.precond_floor); };
  DescentResult dr = descend(std::move(x0), f, measure, free_mask, opts, diag);
  return ScalarField(g, std::move(dr.x));
}

void ContinuationSchedule::validate() const {
  require(!sigmas.empty() && !deltas.empty() && !ps.empty(), ErrorKind::Config, "schedule lists must be nonempty");
  auto strictly = [](const std::vector<double>& v, bool decreasing) {
    for (std::size_t k = 1; k < v.size(); ++k)
      if (decreasing ? !(v[k] < v[k - 1]) : !(v[k] > v[k - 1])) return false;
    return true;
  };
  require(strictly(sigmas, true), ErrorKind::Config, "sigmas must be strictly decreasing");
  require(strictly(deltas, true), ErrorKind::Config, "deltas must be strictly decreasing");
  require(strictly(ps, false), ErrorKind::Config, "ps must be strictly increasing");
  require(sigmas.back() > 0.0 && deltas.back() > 0.0, ErrorKind::Config, "sigmas and deltas must be positive");
  require(ps.front() >= 2.0, ErrorKind::Config, "exponents must be at least 2");
  require(eps > 0.0, ErrorKind::Config, "eps must be positive");
}

std::size_t ContinuationSchedule::stage_count() const { return std::max(sigmas.size(), deltas.size()); }

std::pair<double, double> ContinuationSchedule::stage(std::size_t k) const {
  return {sigmas[std::min(k, sigmas.size() - 1)], deltas[std::min(k, deltas.size() - 1)]};
}

ContinuationResult run_continuation(const DomainSpec& domain, const ContinuationSchedule& schedule,
                                    const SolveOptions& opts, const ScalarField* u0) {
  schedule.validate();
  ContinuationResult out;
  out.u = u0 ? *u0 : domain.phi;
  for (std::size_t k = 0; k < schedule.stage_count(); ++k) {
    const auto [sigma, delta] = schedule.stage(k);
    const PenaltyParams params{sigma, delta, schedule.eps, schedule.ps.front(), domain.gamma};
    MinimizeResult r;
    try {
      r = minimize(out.u, domain, params, opts);
    } catch (const Error& e) {
      fail(e.kind(), "continuation stage " + std::to_string(k) + ": " + e.what());
    }
    out.u = std::move(r.u);
    out.trace.push_back({"continuation", params, r.report});
  }
  return out;
}

void check_volume_feasible(const DomainSpec& domain) {
  const double cap = outside_capacity(domain);
  if (domain.gamma > cap) {
    std::ostringstream msg;
    msg << "gamma = " << domain.gamma << " exceeds the outside area available on the grid (" << cap << ")";
    fail(ErrorKind::Config, msg.str());
  }
}

TuneResult tune_epsilon(const DomainSpec& domain, const ContinuationSchedule& schedule, double target_tol,
                        const SolveOptions& opts, const ScalarField& u_start, double eps_min) {
  require(target_tol > 0.0, ErrorKind::InvalidArgument, "target_tol must be positive");
  schedule.validate();
  check_volume_feasible(domain);
  const auto [sigma, delta] = schedule.stage(schedule.stage_count() - 1);
  TuneResult out;
  out.u = u_start;
  double eps = schedule.eps;
  for (;;) {
    const PenaltyParams params{sigma, delta, eps, schedule.ps.front(), domain.gamma};
    MinimizeResult r = minimize(out.u, domain, params, opts);
    out.u = std::move(r.u);
    const double vol = r.report.volume_outside;
    out.trace.push_back({"eps", params, r.report});
    if (std::abs(vol - domain.gamma) <= target_tol * domain.gamma) {
      out.eps_star = eps;
      return out;
    }
    eps *= 0.5;
    if (eps < eps_min) {
      std::ostringstream msg;
      msg << "volume not saturable at this resolution: achieved " << vol << " for gamma = " << domain.gamma;
      fail(ErrorKind::NotSaturable, msg.str());
    }
  }
}

SweepResult p_sweep(const DomainSpec& domain, const ContinuationSchedule& schedule, const SolveOptions& opts,
                    const ScalarField& u_start) {
  schedule.validate();
  const auto [sigma, delta] = schedule.stage(schedule.stage_count() - 1);
  SweepResult out;
  ScalarField u = u_start;
  for (double p : schedule.ps) {
    const PenaltyParams params{sigma, delta, schedule.eps, p, domain.gamma};
    MinimizeResult r;
    try {
      r = minimize(u, domain, params, opts);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "p-sweep at p = " << p << ": " << e.what();
      fail(e.kind(), msg.str());
    }
    u = r.u;
    out.u_list.push_back(std::move(r.u));
    out.trace.push_back({"p", params, r.report});
  }
  out.u_inf = out.u_list.back();
  return out;
}

}  // namespace fbopt
