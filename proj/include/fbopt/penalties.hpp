#pragma once

namespace fbopt {

struct PenaltyValue {
  double value = 0.0;
  double derivative = 0.0;
};

/// (sigma, delta, eps, p) plus the volume budget gamma.
struct PenaltyParams {
  double sigma = 1e-2;
  double delta = 1e-2;
  double eps = 0.1;
  double p = 2.0;
  double gamma = 1.0;

  /// Throws InvalidArgument unless sigma, delta, eps, gamma > 0 and p >= 2.
  void validate() const;
};

/// Obstacle penalty: 0 for t >= 0, t^2/(2 sigma^2) on [-sigma, 0),
/// -(t + sigma/2)/sigma below -sigma. Convex, nonincreasing, C1.
PenaltyValue g_sigma(double t, double sigma);

/// Ramp 0 -> 1 on [0, delta]. The derivative is 1/delta on the open
/// interval and 0 at both kinks.
PenaltyValue h_delta(double t, double delta);

/// Volume penalty: (t - gamma)/eps above gamma, eps (t - gamma) below.
/// The derivative at t = gamma is the right derivative 1/eps.
PenaltyValue f_eps(double t, double eps, double gamma);

// Unchecked versions for inner loops whose parameters were validated once.
namespace kernel {

inline PenaltyValue g_sigma(double t, double sigma) {
  if (t >= 0.0) return {0.0, 0.0};
  if (t >= -sigma) return {t * t / (2.0 * sigma * sigma), t / (sigma * sigma)};
  return {-(t + 0.5 * sigma) / sigma, -1.0 / sigma};
}

inline PenaltyValue h_delta(double t, double delta) {
  if (t <= 0.0) return {0.0, 0.0};
  if (t >= delta) return {1.0, 0.0};
  return {t / delta, 1.0 / delta};
}

}  // namespace kernel

}  // namespace fbopt
