#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "fbopt/geometry.hpp"

namespace fbtest {

// Disk room 0.4, plateau (0.1, 0.6, 0.1), budget for R* = 0.7.
inline double benchmark_gamma() { return std::numbers::pi * (0.49 - 0.16); }

inline fbopt::RadialMeta benchmark_meta() { return {{0.0, 0.0}, 0.4, 0.1, 0.6, 0.1}; }

inline fbopt::DomainSpec small_radial(double h = 1.0 / 16.0, double half = 1.25) {
  const fbopt::Grid g = fbopt::build_grid({-half, -half, half, half}, h);
  return fbopt::make_radial_domain(g, benchmark_meta(), benchmark_gamma());
}

inline fbopt::ScalarField random_field(const fbopt::Grid& g, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> U(lo, hi);
  fbopt::ScalarField f(g);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = U(rng);
  return f;
}

// Random field kept away from the kinks of h_delta (0, delta) and g_sigma (-sigma).
inline fbopt::ScalarField kink_free_field(const fbopt::DomainSpec& d, std::mt19937_64& rng, double delta, double sigma) {
  fbopt::ScalarField u = random_field(d.grid(), rng, -0.3, 0.9);
  for (std::size_t k = 0; k < u.size(); ++k) {
    auto away = [&](double kink) {
      if (std::abs(u[k] - kink) < 1e-4) u[k] = kink + 2e-4;
    };
    away(0.0);
    away(delta);
    const double t = u[k] - d.phi[k];
    if (std::abs(t + sigma) < 1e-4) u[k] += 2e-4;
  }
  return u;
}

template <class F>
fbopt::ScalarField sample(const fbopt::Grid& g, F&& fn) {
  fbopt::ScalarField f(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const fbopt::Point q = g.node(i, j);
      f(i, j) = fn(q.x, q.y);
    }
  return f;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fbopt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fbtest
