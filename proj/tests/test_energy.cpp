#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fbopt/energy.hpp"
#include "fbopt/error.hpp"
#include "fbopt/solver.hpp"
#include "support.hpp"

using namespace fbopt;

namespace {

DomainSpec flat_domain(const Grid& g, double mask, double gamma = 1.0) {
  DomainSpec d;
  d.omega_mask = ScalarField(g, mask);
  d.phi = ScalarField(g, 0.0);
  d.gamma = gamma;
  return d;
}

double max_abs(const ScalarField& f) {
  double m = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) m = std::max(m, std::abs(f[k]));
  return m;
}

}  // namespace

TEST_CASE("discrete gradient of affine and constant fields") {
  const Grid g = build_grid({0, 0, 4, 4}, 1.0);
  const CellGradientField a = discrete_gradient_field(fbtest::sample(g, [](double x, double) { return x; }));
  for (std::size_t k = 0; k < a.gx.size(); ++k) {
    CHECK(a.gx[k] == doctest::Approx(1.0));
    CHECK(a.gy[k] == doctest::Approx(0.0));
  }
  const CellGradientField c = discrete_gradient_field(ScalarField(g, 2.5));
  CHECK(c.max_magnitude() == 0.0);
  const CellGradientField b = discrete_gradient_field(fbtest::sample(g, [](double x, double y) { return 3 * x + 4 * y; }));
  for (int cj = 0; cj < b.ncy; ++cj)
    for (int ci = 0; ci < b.ncx; ++ci) CHECK(b.magnitude(ci, cj) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("energy of simple fields") {
  const Grid g = build_grid({-1, -1, 1, 1}, 0.125);
  DomainSpec zero;
  zero.omega_mask = rasterize_disk({0, 0}, 0.4, g);
  zero.phi = ScalarField(g, 0.0);
  zero.gamma = 0.7;
  const PenaltyParams pp{0.01, 0.01, 0.1, 4.0, 0.7};
  const EnergyBreakdown e0 = eval_penalized_energy(ScalarField(g, 0.0), zero, pp);
  CHECK(e0.dirichlet == 0.0);
  CHECK(e0.obstacle == 0.0);
  CHECK(e0.volume == doctest::Approx(-0.1 * 0.7));

  const DomainSpec radial = fbtest::small_radial();
  const EnergyBreakdown e1 = eval_penalized_energy(ScalarField(radial.grid(), 0.0), radial, {0.01, 0.01, 0.1, 4.0, radial.gamma});
  CHECK(e1.obstacle > 0.0);

  const Grid unit = build_grid({0, 0, 1, 1}, 1.0 / 16);
  const DomainSpec covered = flat_domain(unit, 1.0);
  const ScalarField x = fbtest::sample(unit, [](double x, double) { return x; });
  const EnergyBreakdown e2 = eval_penalized_energy(x, covered, {0.01, 0.01, 0.1, 4.0, 1.0});
  CHECK(std::abs(e2.dirichlet - 0.25) <= 1e-12);
}

TEST_CASE("energy gradient vanishes at trivial minimizers") {
  const Grid g = build_grid({0, 0, 4, 4}, 1.0);
  const DomainSpec d = flat_domain(g, 1.0);
  const PenaltyParams pp{0.1, 0.1, 0.1, 4.0, 1.0};
  CHECK(max_abs(eval_energy_gradient(ScalarField(g, 0.0), d, pp)) <= 1e-10);

  const DomainSpec r = fbtest::small_radial();
  DomainSpec inside = r;
  inside.omega_mask = ScalarField(r.grid(), 1.0);
  const ScalarField c(r.grid(), 0.9);
  CHECK(max_abs(eval_energy_gradient(c, inside, {0.01, 0.01, 0.1, 4.0, r.gamma})) <= 1e-30);
}

TEST_CASE("energy gradient matches central differences") {
  std::mt19937_64 rng(11);
  const DomainSpec base = fbtest::small_radial(1.0 / 16, 0.75);
  const double sigma = 0.1, delta = 0.1, eps = 0.1;
  double worst = 0.0;
  int fields = 0;
  for (double p : {2.0, 4.0, 8.0}) {
    for (int trial = 0; trial < 7 && fields < 20; ++trial, ++fields) {
      DomainSpec d = base;
      const ScalarField u = fbtest::kink_free_field(d, rng, delta, sigma);
      // keep the smoothed measure away from the f_eps kink
      const double m = eval_penalized_energy(u, d, {sigma, delta, eps, p, 1.0}).smoothed_measure;
      d.gamma = trial % 2 ? 0.5 * m : 2.0 * m + 0.1;
      const PenaltyParams pp{sigma, delta, eps, p, d.gamma};
      const ScalarField g = eval_energy_gradient(u, d, pp);
      const double scale = std::max(1.0, max_abs(u));
      const double step = 1e-6 * scale;
      double err = 0.0;
      ScalarField w = u;
      for (std::size_t k = 0; k < u.size(); ++k) {
        w[k] = u[k] + step;
        const double fp = eval_penalized_energy(w, d, pp).total;
        w[k] = u[k] - step;
        const double fm = eval_penalized_energy(w, d, pp).total;
        w[k] = u[k];
        err = std::max(err, std::abs((fp - fm) / (2 * step) - g[k]));
      }
      worst = std::max(worst, err / max_abs(g));
    }
  }
  CHECK(fields == 20);
  CHECK(worst <= 1e-5);
}

TEST_CASE("Hessian-vector product matches differences of the gradient") {
  std::mt19937_64 rng(12);
  DomainSpec d = fbtest::small_radial(1.0 / 16, 0.75);
  const double sigma = 0.1, delta = 0.1;
  const ScalarField u = fbtest::kink_free_field(d, rng, delta, sigma);
  const ScalarField v = fbtest::random_field(d.grid(), rng, -1.0, 1.0);
  for (double p : {2.0, 3.0, 6.0}) {
    const PenaltyParams pp{sigma, delta, 0.1, p, 100.0};
    PenalizedEnergy e(d, pp);
    e.prepare_hessian(u.values());
    std::vector<double> hv(u.size());
    e.hessian_apply(v.values(), hv);
    const double t = 1e-6;
    ScalarField up = u, um = u;
    for (std::size_t k = 0; k < u.size(); ++k) {
      up[k] += t * v[k];
      um[k] -= t * v[k];
    }
    const ScalarField gp = eval_energy_gradient(up, d, pp), gm = eval_energy_gradient(um, d, pp);
    double err = 0.0, ref = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      const double fd = (gp[k] - gm[k]) / (2 * t);
      err = std::max(err, std::abs(fd - hv[k]));
      ref = std::max(ref, std::abs(fd));
    }
    CHECK(err <= 1e-6 * ref);
  }
}

TEST_CASE("Dirichlet energy is p-homogeneous and log-domain evaluation agrees") {
  std::mt19937_64 rng(13);
  const Grid g = build_grid({-1, -1, 1, 1}, 0.1);
  const ScalarField u = fbtest::random_field(g, rng, -1.0, 1.0);
  ScalarField u2 = u;
  for (std::size_t k = 0; k < u.size(); ++k) u2[k] = 2 * u[k];
  for (double p : {2.0, 4.0, 7.5, 16.0}) {
    const double a = dirichlet_energy(u, p), b = dirichlet_energy(u2, p);
    CHECK(b == doctest::Approx(std::pow(2.0, p) * a).epsilon(1e-12));
    const double naive = dirichlet_energy(u, p, DirichletMode::Naive);
    const double logd = dirichlet_energy(u, p, DirichletMode::LogDomain);
    CHECK(std::abs(naive - logd) <= 1e-10 * naive);
  }
}

TEST_CASE("limit energy examples") {
  const Grid g = build_grid({-1, -1, 1, 1}, 0.125);
  DomainSpec d;
  d.omega_mask = rasterize_disk({0, 0}, 0.4, g);
  d.phi = ScalarField(g, 0.0);
  d.gamma = 0.5;
  CHECK(eval_limit_energy(ScalarField(g, 0.0), d, 0.1, 4.0, 0.0) == doctest::Approx(-0.05));
  d.gamma = outside_capacity(d);
  CHECK(std::abs(eval_limit_energy(ScalarField(g, 1.0), d, 0.1, 4.0, 0.0)) <= 1e-12);
}

TEST_CASE("variational inequality at a converged minimizer") {
  const DomainSpec d = fbtest::small_radial();
  const PenaltyParams pp{1e-3, d.grid().h(), 0.1, 4.0, d.gamma};
  SolveOptions opts;
  opts.tol_grad = 1e-7;
  const MinimizeResult r = minimize(d.phi, d, pp, opts);
  INFO(r.report.stop_reason, " grad ", r.report.grad_norm);
  REQUIRE(r.report.converged);
  const ScalarField& u = r.u;
  double dip = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dip = std::min(dip, u[k] - d.phi[k]);
  CHECK(dip >= -pp.sigma);

  const Grid& g = d.grid();
  const double h = g.h();
  const double G = discrete_gradient_field(u).max_magnitude();
  auto bump = [&](double cx, double cy, double rad) {
    return fbtest::sample(g, [&](double x, double y) {
      const double s = std::hypot(x - cx, y - cy) / rad;
      return s < 1.0 ? 0.05 * (1 - s * s) * (1 - s * s) : 0.0;
    });
  };
  // inside the room no volume kink is touched, so the Minty form applies
  for (const auto& [cx, cy] : {std::pair{0.25, 0.0}, std::pair{-0.15, 0.2}}) {
    const ScalarField b = bump(cx, cy, 0.12);
    ScalarField up = u, down = u;
    double l1 = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      up[k] = std::max(d.phi[k], u[k] + b[k]);
      down[k] = std::max(d.phi[k], u[k] - b[k]);
      l1 += h * h * b[k];
    }
    const double scale = l1 * std::max(1.0, std::pow(G, 3.0));
    CHECK(variational_inequality_residual(u, up, d, pp) >= -1e-6 * scale);
    CHECK(variational_inequality_residual(u, down, d, pp) >= -1e-6 * scale);
  }
  // across the free boundary: u is a local minimizer along every bump direction
  const double J0 = eval_penalized_energy(u, d, pp).total;
  for (const auto& [cx, cy] : {std::pair{0.0, -0.55}, std::pair{0.6, 0.3}, std::pair{-0.7, 0.0}})
    for (double t : {1.0, 0.1, 0.01}) {
      const ScalarField b = bump(cx, cy, 0.2);
      ScalarField up = u, down = u;
      for (std::size_t k = 0; k < u.size(); ++k) {
        up[k] = u[k] + t * b[k];
        down[k] = u[k] - t * b[k];
      }
      CHECK(eval_penalized_energy(up, d, pp).total >= J0 - 1e-12);
      CHECK(eval_penalized_energy(down, d, pp).total >= J0 - 1e-12);
    }
}
