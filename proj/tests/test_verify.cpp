#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fbopt/energy.hpp"
#include "fbopt/error.hpp"
#include "fbopt/freeboundary.hpp"
#include "fbopt/verify.hpp"
#include "support.hpp"

using namespace fbopt;

namespace {

double interior_max(const ScalarField& f, int margin = 1) {
  const Grid& g = f.grid();
  double m = 0.0;
  for (int j = margin; j < g.ny() - margin; ++j)
    for (int i = margin; i < g.nx() - margin; ++i) m = std::max(m, std::abs(f(i, j)));
  return m;
}

RadialOracle bench_oracle() { return RadialOracle::make(fbtest::benchmark_meta(), fbtest::benchmark_gamma()); }

}  // namespace

TEST_CASE("oracle constants") {
  const RadialOracle o = bench_oracle();
  CHECK(o.R_star == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(o.lip == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_NOTHROW(o.validate());
  RadialOracle bad = o;
  bad.gamma *= 1.01;
  CHECK_THROWS_AS(bad.validate(), Error);

  // the cone cuts the smoothstep shoulder slightly; the plateau profile is independent of the oracle code
  const OracleFeasibility f = check_oracle(o);
  const PlateauSpec s{o.r0, o.M, o.w};
  double worst = 0.0, lip = 0.0;
  for (int k = 0; k <= 100000; ++k) {
    const double r = o.R_star * k / 100000.0;
    const double cone = r <= o.r0 ? o.M : o.M * (o.R_star - r) / (o.R_star - o.r0);
    worst = std::max(worst, plateau_profile(s, r) - cone);
    if (r < o.R_star) lip = std::max(lip, plateau_profile(s, r) / (o.R_star - r));
  }
  CHECK(f.max_violation == doctest::Approx(worst).epsilon(1e-3));
  CHECK(f.lip_lower == doctest::Approx(lip).epsilon(1e-4));
  CHECK(f.lip_lower >= o.lip);
}

TEST_CASE("cone field") {
  const RadialOracle o = bench_oracle();
  const double h = 1.0 / 64;
  const Grid g = build_grid({-1, -1, 1, 1}, h);
  const ScalarField cone = radial_cone_field(o, g);
  const int c = g.nx() / 2;
  CHECK(cone(c, c) == o.M);
  const double r = 25 * h;
  CHECK(cone(c + 25, c) == doctest::Approx(o.M * (o.R_star - r) / (o.R_star - o.r0)).epsilon(1e-12));
  CHECK(cone(c + 45, c) == 0.0);
  CHECK(std::abs(discrete_gradient_field(cone).max_magnitude() - o.lip) <= 2 * h * o.lip);
  CHECK_THROWS_AS(radial_cone_field(o, build_grid({-0.7, -0.7, 0.7, 0.7}, h)), Error);

  const double tau = 0.5 * 0.1 * o.lip * h;
  const ContourSet ring = extract_contour(cone, tau);
  for (const Polyline& pl : ring.polylines)
    for (const Point& q : pl.points) CHECK(std::abs(std::hypot(q.x, q.y) - o.R_star) <= tau / o.lip + h);
}

TEST_CASE("radial p-harmonic profile") {
  CHECK(radial_p_harmonic(0.0, 2.5, 4.0, 0.3) == 2.5);
  CHECK(radial_p_harmonic(1.0, 0.0, 4.0, 1.0) == doctest::Approx(1.0));
  CHECK(radial_p_harmonic(1.0, 0.0, 4.0, 8.0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK_THROWS_AS(radial_p_harmonic(1.0, 0.0, 4.0, 0.0), Error);
}

TEST_CASE("p-Laplacian residual") {
  const Grid g = build_grid({-1, -1, 1, 1}, 1.0 / 16);
  const ScalarField affine = fbtest::sample(g, [](double x, double y) { return 0.4 * x - 1.3 * y; });
  for (double p : {2.0, 4.0, 8.0}) CHECK(interior_max(plap_residual_field(affine, p)) <= 1e-10 * std::pow(1.4, p - 1));

  const ScalarField q = fbtest::sample(g, [](double x, double y) { return x * x + y * y; });
  const ScalarField lap = plap_residual_field(q, 2.0);
  for (int j = 1; j < g.ny() - 1; ++j)
    for (int i = 1; i < g.nx() - 1; ++i) CHECK(std::abs(lap(i, j) - 4.0) <= 1e-8 * 4.0);

  // radial p-harmonic profile on an annulus: residual shrinks with h
  const double p = 4.0;
  double prev = 1e300;
  for (double h : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    const Grid gg = build_grid({-1, -1, 1, 1}, h);
    const ScalarField u = fbtest::sample(gg, [&](double x, double y) {
      return radial_p_harmonic(1.0, 0.0, p, std::max(std::hypot(x, y), 1e-3));
    });
    const ScalarField res = plap_residual_field(u, p);
    double m = 0.0;
    for (int j = 0; j < gg.ny(); ++j)
      for (int i = 0; i < gg.nx(); ++i) {
        const double r = std::hypot(gg.node(i, j).x, gg.node(i, j).y);
        if (r > 0.3 && r < 0.8) m = std::max(m, std::abs(res(i, j)));
      }
    CHECK(m <= 4.0 * h);
    CHECK(m < prev);
    prev = m;
  }

  // cone: nonpositive away from the vertex circle and the outer rim
  const RadialOracle o = bench_oracle();
  const double h = 1.0 / 64;
  const Grid gc = build_grid({-1, -1, 1, 1}, h);
  const ScalarField cone = radial_cone_field(o, gc);
  const ScalarField res = plap_residual_field(cone, 4.0);
  for (int j = 0; j < gc.ny(); ++j)
    for (int i = 0; i < gc.nx(); ++i) {
      const double r = std::hypot(gc.node(i, j).x, gc.node(i, j).y);
      if (r > o.r0 + 3 * h && r < o.R_star - 3 * h) CHECK(res(i, j) <= 1e-10);
    }
}

TEST_CASE("infinity-Laplacian residual") {
  const Grid g = build_grid({-1, -1, 1, 1}, 1.0 / 32);
  CHECK(interior_max(inflap_residual_field(fbtest::sample(g, [](double x, double y) { return 2 * x + y; }))) <= 1e-10);

  const double h = g.h();
  const ScalarField cone = fbtest::sample(g, [](double x, double y) { return std::hypot(x, y); });
  const ScalarField rc = inflap_residual_field(cone);
  for (int j = 1; j < g.ny() - 1; ++j)
    for (int i = 1; i < g.nx() - 1; ++i) {
      const Point q = g.node(i, j);
      if (std::hypot(q.x, q.y) > 0.25) CHECK(std::abs(rc(i, j)) <= 2 * h);
    }

  const ScalarField half = fbtest::sample(g, [](double x, double y) { return 0.5 * (x * x + y * y); });
  const ScalarField rh = inflap_residual_field(half);
  for (int j = 1; j < g.ny() - 1; ++j)
    for (int i = 1; i < g.nx() - 1; ++i) {
      const Point q = g.node(i, j);
      CHECK(std::abs(rh(i, j) - (q.x * q.x + q.y * q.y)) <= 1e-10);
    }
}

TEST_CASE("region labels partition the grid") {
  const DomainSpec d = fbtest::small_radial(1.0 / 32, 1.0);
  const RadialOracle o = bench_oracle();
  const ScalarField cone = radial_cone_field(o, d.grid());
  const double tau = 0.5 * 0.1 * d.grid().h();
  const RegionLabels L = label_regions(cone, d, {tau, -1.0, 2.0});
  std::size_t total = 0;
  for (Region r : {Region::Contact, Region::Heated, Region::Insulation, Region::Dead, Region::Band}) total += L.count(r);
  CHECK(total == d.grid().size());
  CHECK(L.count(Region::Insulation) > 0);
  CHECK(L.count(Region::Band) > 0);
  // band nodes lie within two cells of a contour
  const ContourSet ext = extract_contour(cone, tau);
  const Grid& g = d.grid();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const Point q = g.node(i, j);
      if (!d.inside(g.index(i, j)) && distance_to_contour(q, ext) < 1.9 * g.h())
        CHECK(L.labels[g.index(i, j)] == Region::Band);
    }
}

TEST_CASE("bounds and constraints") {
  const DomainSpec d = fbtest::small_radial(1.0 / 64, 1.0);
  const RadialOracle o = bench_oracle();
  const double h = d.grid().h();
  const double tau = 0.5 * 0.1 * o.lip * h;
  const ScalarField cone = radial_cone_field(o, d.grid());
  BoundsOptions opts;
  opts.tau = tau;
  opts.obstacle_tol = 3e-3;  // the cone undercuts the smoothstep shoulder by about 1.4e-3
  const BoundsReport ok = bounds_and_constraints_check(cone, d, opts);
  for (const CheckItem& c : ok.items) CHECK_MESSAGE(c.pass, c.name);
  const double vol = positive_volume_outside(cone, d, tau);
  CHECK(std::abs(vol - d.gamma) <= 4 * h * o.R_star);

  const BoundsReport low = bounds_and_constraints_check(ScalarField(d.grid(), -0.1), d, opts);
  CHECK_FALSE(low.pass);
  CHECK_FALSE(low.items[0].pass);
  const BoundsReport high = bounds_and_constraints_check(ScalarField(d.grid(), 2 * d.phi.max()), d, opts);
  CHECK_FALSE(high.items[1].pass);

  std::ostringstream os;
  write_report(os, ok);
  CHECK(os.str().find("pass=1") != std::string::npos);
}

TEST_CASE("region sign check on an exact equality field") {
  // affine field outside a tiny room: the p-Laplacian vanishes, so heated and insulation pass
  const Grid g = build_grid({-1, -1, 1, 1}, 1.0 / 32);
  DomainSpec d;
  d.omega_mask = rasterize_disk({0, 0}, 0.3, g);
  d.phi = ScalarField(g, 0.0);
  d.gamma = 1.0;
  const ScalarField u = fbtest::sample(g, [](double x, double) { return 2.0 + 0.5 * x; });
  const RegionLabels L = label_regions(u, d, {0.0, -1.0, 2.0});
  const RegionSignReport rep = region_sign_check(u, d, 4.0, L, 0.0);
  CHECK(rep.pass);
  for (const RegionCheck& c : rep.regions) CHECK(c.max_violation <= 1e-9);
}
