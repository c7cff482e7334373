#include "fbopt/penalties.hpp"

#include <cmath>

#include "fbopt/error.hpp"

namespace fbopt {

void PenaltyParams::validate() const {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::InvalidArgument, "sigma must be positive");
  require(delta > 0.0 && std::isfinite(delta), ErrorKind::InvalidArgument, "delta must be positive");
  require(eps > 0.0 && std::isfinite(eps), ErrorKind::InvalidArgument, "eps must be positive");
  require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::InvalidArgument, "gamma must be positive");
  require(p >= 2.0 && std::isfinite(p), ErrorKind::InvalidArgument, "p must be at least 2");
}

PenaltyValue g_sigma(double t, double sigma) {
  require(sigma > 0.0, ErrorKind::InvalidArgument, "sigma must be positive");
  return kernel::g_sigma(t, sigma);
}

PenaltyValue h_delta(double t, double delta) {
  require(delta > 0.0, ErrorKind::InvalidArgument, "delta must be positive");
  return kernel::h_delta(t, delta);
}

PenaltyValue f_eps(double t, double eps, double gamma) {
  require(eps > 0.0, ErrorKind::InvalidArgument, "eps must be positive");
  require(gamma > 0.0, ErrorKind::InvalidArgument, "gamma must be positive");
  if (t >= gamma) return {(t - gamma) / eps, 1.0 / eps};
  return {eps * (t - gamma), eps};
}

}  // namespace fbopt
