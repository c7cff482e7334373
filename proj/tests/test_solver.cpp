#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fbopt/energy.hpp"
#include "fbopt/error.hpp"
#include "fbopt/solver.hpp"
#include "fbopt/verify.hpp"
#include "support.hpp"

using namespace fbopt;

namespace {

// Golden-section coordinate descent on the total energy: slow, but shares no
// code with the solver.
double coordinate_descent(ScalarField& u, const DomainSpec& d, const PenaltyParams& pp, int sweeps) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](std::size_t k, double x) {
    const double keep = u[k];
    u[k] = x;
    const double e = eval_penalized_energy(u, d, pp).total;
    u[k] = keep;
    return e;
  };
  for (int s = 0; s < sweeps; ++s)
    for (std::size_t k = 0; k < u.size(); ++k) {
      double a = u[k] - 0.5, b = u[k] + 0.5;
      double c = b - gr * (b - a), e = a + gr * (b - a);
      double fc = f(k, c), fe = f(k, e);
      for (int it = 0; it < 80; ++it) {
        if (fc < fe) {
          b = e;
          e = c;
          fe = fc;
          c = b - gr * (b - a);
          fc = f(k, c);
        } else {
          a = c;
          c = e;
          fc = fe;
          e = a + gr * (b - a);
          fe = f(k, e);
        }
      }
      const double x = 0.5 * (a + b);
      if (f(k, x) < f(k, u[k])) u[k] = x;
    }
  return eval_penalized_energy(u, d, pp).total;
}

}  // namespace

TEST_CASE("option and schedule validation") {
  SolveOptions o;
  CHECK_NOTHROW(o.validate());
  o.armijo_c = 1.5;
  CHECK_THROWS_AS(o.validate(), Error);

  ContinuationSchedule s;
  s.sigmas = {1e-2, 1e-3, 1e-4};
  s.deltas = {0.1, 0.05};
  s.ps = {4, 8};
  CHECK_NOTHROW(s.validate());
  CHECK(s.stage_count() == 3);
  CHECK(s.stage(2).second == 0.05);
  s.ps = {8, 4};
  CHECK_THROWS_AS(s.validate(), Error);
  s.ps = {1.5};
  CHECK_THROWS_AS(s.validate(), Error);
  s.ps = {4};
  s.sigmas = {};
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("zero obstacle gives the zero minimizer") {
  const Grid g = build_grid({-1, -1, 1, 1}, 0.125);
  DomainSpec d;
  d.omega_mask = rasterize_disk({0, 0}, 0.4, g);
  d.phi = ScalarField(g, 0.0);
  d.gamma = 0.3;
  const MinimizeResult r = minimize(d.phi, d, {0.01, 0.125, 0.1, 4.0, 0.3}, SolveOptions{});
  CHECK(r.report.converged);
  CHECK(r.u.min() == 0.0);
  CHECK(r.u.max() == 0.0);
  CHECK(r.report.energy.total == doctest::Approx(-0.1 * 0.3));
}

TEST_CASE("small problem matches an independent coordinate-descent minimizer") {
  const Grid g = build_grid({-1, -1, 1, 1}, 0.5);
  DomainSpec d;
  d.omega_mask = ScalarField(g, 0.0);
  for (int j = 1; j <= 3; ++j)
    for (int i = 1; i <= 3; ++i) d.omega_mask(i, j) = 1.0;
  d.phi = ScalarField(g, 0.0);
  d.phi(2, 2) = 1.0;
  d.gamma = 0.5;
  for (double p : {2.0, 4.0}) {
    const PenaltyParams pp{1e-3, 0.5, 0.5, p, d.gamma};
    SolveOptions opts;
    opts.tol_grad = 1e-10;
    const MinimizeResult r = minimize(d.phi, d, pp, opts);
    ScalarField v = r.u;
    const double oracle = coordinate_descent(v, d, pp, 60);
    CHECK(r.report.energy.total <= oracle + 1e-8 * std::max(1.0, std::abs(oracle)));
    ScalarField w = d.phi;
    const double cold = coordinate_descent(w, d, pp, 400);
    CHECK(r.report.energy.total <= cold + 1e-8 * std::max(1.0, std::abs(cold)));
  }
}

TEST_CASE("radial solve: monotone trace and bounds") {
  const DomainSpec d = fbtest::small_radial();
  const MinimizeResult r = minimize(d.phi, d, {1e-3, d.grid().h(), 0.1, 4.0, d.gamma}, SolveOptions{});
  CHECK(r.report.converged);
  CHECK(r.report.grad_norm <= SolveOptions{}.tol_grad);
  for (std::size_t k = 1; k < r.energy_trace.size(); ++k) CHECK(r.energy_trace[k] <= r.energy_trace[k - 1]);
  const double M = d.phi.max();
  CHECK(r.u.min() >= -1e-8 * M);
  CHECK(r.u.max() <= M + 1e-8 * M);
}

TEST_CASE("continuation, warm starts and sweep") {
  const DomainSpec d = fbtest::small_radial();
  const double h = d.grid().h();
  ContinuationSchedule s;
  s.sigmas = {1e-2, 1e-3, 1e-4, 1e-5};
  s.deltas = {h, 0.3 * h, 0.1 * h};
  s.ps = {4};
  s.eps = 0.1;
  SolveOptions opts;

  ContinuationSchedule one = s;
  one.sigmas = {1e-2};
  one.deltas = {h};
  const ContinuationResult c1 = run_continuation(d, one, opts);
  const MinimizeResult m1 = minimize(d.phi, d, {1e-2, h, 0.1, 4.0, d.gamma}, opts);
  REQUIRE(c1.trace.size() == 1);
  for (std::size_t k = 0; k < d.phi.size(); ++k) CHECK(c1.u[k] == m1.u[k]);

  const ContinuationResult c = run_continuation(d, s, opts);
  REQUIRE(c.trace.size() == 4);
  const double M = d.phi.max();
  double gap = 0.0;
  for (std::size_t k = 0; k < c.u.size(); ++k) gap = std::min(gap, c.u[k] - d.phi[k]);
  CHECK(gap >= -1e-6 * M);
  for (const StageReport& st : c.trace) CHECK(st.report.lip_estimate <= 2.0 * c.trace.front().report.lip_estimate);

  // warm start against cold start at the last stage
  const auto [sg, dl] = s.stage(3);
  const MinimizeResult cold = minimize(d.phi, d, {sg, dl, 0.1, 4.0, d.gamma}, opts);
  CHECK(c.trace.back().report.iters <= 2 * std::max(1, cold.report.iters));

  ContinuationSchedule sw = s;
  const SweepResult single = p_sweep(d, sw, opts, c.u);
  REQUIRE(single.u_list.size() == 1);
  for (std::size_t k = 0; k < c.u.size(); ++k) CHECK(single.u_inf[k] == single.u_list[0][k]);

  sw.ps = {4, 8, 16};
  const SweepResult sweep = p_sweep(d, sw, opts, c.u);
  REQUIRE(sweep.u_list.size() == 3);
  const RadialOracle o = RadialOracle::make(*d.meta, d.gamma);
  for (const StageReport& st : sweep.trace) CHECK(st.report.lip_estimate <= 1.5 * o.lip);
}

TEST_CASE("volume feasibility") {
  DomainSpec d = fbtest::small_radial();
  d.gamma = 2.0 * outside_capacity(d);
  CHECK_THROWS_AS(check_volume_feasible(d), Error);
  ContinuationSchedule s;
  s.sigmas = {1e-2};
  s.deltas = {0.05};
  s.ps = {4};
  try {
    tune_epsilon(d, s, 0.05, SolveOptions{}, d.phi);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("p-harmonic replacement") {
  const Grid g = build_grid({-1, -1, 1, 1}, 1.0 / 16);
  const Ball ball{{0.1, -0.05}, 0.5};
  SolveOptions opts;
  opts.tol_grad = 1e-10;

  const ScalarField affine = fbtest::sample(g, [](double x, double y) { return 0.3 * x - 0.7 * y + 0.1; });
  const ScalarField same = p_harmonic_replacement(affine, ball, 4.0, opts);
  double diff = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) diff = std::max(diff, std::abs(same[k] - affine[k]));
  CHECK(diff <= 1e-8);

  std::mt19937_64 rng(21);
  for (double p : {2.0, 4.0, 8.0}) {
    const ScalarField u = fbtest::random_field(g, rng, 0.0, 0.2);
    const ScalarField r = p_harmonic_replacement(u, ball, p, opts);
    CHECK(dirichlet_energy(r, p) <= dirichlet_energy(u, p) + 1e-10);
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        if (distance(g.node(i, j), ball.center) >= ball.radius) CHECK(r(i, j) == u(i, j));
  }

  // cone away from its vertex: energy drops and the maximum principle holds
  const ScalarField cone = fbtest::sample(g, [](double x, double y) { return std::hypot(x, y); });
  const ScalarField rep = p_harmonic_replacement(cone, {{0.5, 0.0}, 0.3}, 16.0, opts);
  CHECK(dirichlet_energy(rep, 16.0) <= dirichlet_energy(cone, 16.0) + 1e-10);
  double lo = 1e9;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (distance(g.node(i, j), {0.5, 0.0}) < 0.3) lo = std::min(lo, rep(i, j));
  CHECK(lo >= 0.2 - 1e-9);
  CHECK(rep.max() <= cone.max());
}
