#pragma once

#include <span>
#include <vector>

#include "fbopt/geometry.hpp"
#include "fbopt/penalties.hpp"

namespace fbopt {

/// Per-cell gradient of the bilinear interpolant, cell (ci, cj) spanning
/// nodes (ci..ci+1, cj..cj+1).
struct CellGradientField {
  Grid grid;
  int ncx = 0;
  int ncy = 0;
  std::vector<double> gx;
  std::vector<double> gy;

  std::size_t index(int ci, int cj) const {
    return static_cast<std::size_t>(cj) * static_cast<std::size_t>(ncx) + static_cast<std::size_t>(ci);
  }
  double magnitude(int ci, int cj) const;
  double max_magnitude() const;
};

CellGradientField discrete_gradient_field(const ScalarField& u);

struct EnergyBreakdown {
  double dirichlet = 0.0;  // (1/p) int |grad u|^p
  double obstacle = 0.0;   // int g_sigma(u - phi)
  double volume = 0.0;     // f_eps(int_{outside} h_delta(u))
  double total = 0.0;
  double grad_max = 0.0;   // max cell |grad u|
  double smoothed_measure = 0.0;  // int_{outside} h_delta(u), the argument of f_eps
};

enum class DirichletMode {
  Auto,       // log-domain only when p log(max|grad u|) > 600
  Naive,
  LogDomain,
};

/// (h^2/4p) sum over cells and their 2x2 Gauss points of |grad u|^p, u the
/// bilinear interpolant. Throws Instability when the result is not
/// representable even after factoring out the largest magnitude.
double dirichlet_energy(const ScalarField& u, double p, DirichletMode mode = DirichletMode::Auto);

/// Evaluates J_{sigma,delta,eps} and optionally its exact nodal gradient.
class PenalizedEnergy {
 public:
  PenalizedEnergy(const DomainSpec& domain, const PenaltyParams& params);

  /// Energy at `u` (laid out on the domain grid). When `grad` is non-empty it
  /// receives dJ/du_k for every node; with `volume_gradient` false the
  /// volume term's contribution is left out.
  EnergyBreakdown evaluate(std::span<const double> u, std::span<double> grad, bool volume_gradient = true);

  /// Only the Dirichlet part and its gradient.
  double evaluate_dirichlet(std::span<const double> u, std::span<double> grad);

  /// Diagonal of the Hessian of the smooth parts (Dirichlet and obstacle
  /// terms); used as a Jacobi preconditioner. The Dirichlet part is floored at
  /// `floor_rel` times its largest entry. At u = phi the obstacle curvature
  /// counts only when `grad` is empty or positive there (descent goes down).
  /// Also leaves the Hessian prepared at `u` for hessian_apply.
  void hessian_diagonal(std::span<const double> u, std::span<double> diag, double floor_rel,
                        std::span<const double> grad = {});

  /// Caches the cell coefficients of the Hessian of the smooth parts at `u`.
  /// The obstacle curvature at u = phi follows the hessian_diagonal rule.
  void prepare_hessian(std::span<const double> u, std::span<const double> grad = {});

  /// out = H v with H from the last prepare_hessian call.
  void hessian_apply(std::span<const double> v, std::span<double> out);

  const DomainSpec& domain() const { return *domain_; }
  const PenaltyParams& params() const { return params_; }

 private:
  double dirichlet_pass(std::span<const double> u, bool want_flux, double* grad_max);
  void gather_loads(std::span<double> out) const;

  const DomainSpec* domain_;
  PenaltyParams params_;
  std::vector<double> gx_, gy_, load_;  // per cell: 4 Gauss-point gradients, 4 corner loads
  std::vector<double> row_energy_, row_max_, row_a_, row_b_;
  std::vector<double> hc_, ha_, wall_;
  bool hessian_ready_ = false;
};

EnergyBreakdown eval_penalized_energy(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params);

ScalarField eval_energy_gradient(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params);

/// Nodal gradient of the Dirichlet term alone.
ScalarField dirichlet_gradient(const ScalarField& u, double p);

/// (1/p) int |grad u|^p + f_eps(|{u > tau} \ room|).
double eval_limit_energy(const ScalarField& u, const DomainSpec& domain, double eps, double p, double tau);

/// Discrete left side of the variational inequality
///   int |grad v|^{p-2} grad v . grad(v - u)
///     + f_eps'(int_out h_delta(u)) int_out h_delta'(u) (v - u),
/// which is >= 0 for every admissible v >= phi when u is a minimizer.
double variational_inequality_residual(const ScalarField& u, const ScalarField& v, const DomainSpec& domain,
                                       const PenaltyParams& params);

}  // namespace fbopt
