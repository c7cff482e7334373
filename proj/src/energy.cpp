#include "fbopt/energy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fbopt/error.hpp"
#include "fbopt/parallel.hpp"

namespace fbopt {

namespace {

// Magnitude of exp(x) that still leaves headroom for the h^2/p prefactor.
constexpr double kLogOverflow = 600.0;

double ipow(double base, int e) {
  double r = 1.0;
  while (e > 0) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

// Evaluates m2^(e/2) for a fixed exponent, with an integer fast path.
class HalfPower {
 public:
  explicit HalfPower(double e) : half_(0.5 * e) {
    const double r = std::round(half_);
    integral_ = std::abs(half_ - r) < 1e-12 && r >= 0.0 && r < 1e6;
    k_ = static_cast<int>(r);
  }
  double operator()(double m2) const {
    if (integral_) return ipow(m2, k_);
    return m2 > 0.0 ? std::pow(m2, half_) : 0.0;
  }

 private:
  double half_;
  bool integral_ = false;
  int k_ = 0;
};

struct CellCorners {
  double a, b, c, d;  // (i,j), (i+1,j), (i,j+1), (i+1,j+1)
};

inline CellCorners corners(std::span<const double> u, int nx, int ci, int cj) {
  const std::size_t k = static_cast<std::size_t>(cj) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ci);
  return {u[k], u[k + 1], u[k + static_cast<std::size_t>(nx)], u[k + static_cast<std::size_t>(nx) + 1]};
}

inline void cell_gradient(const CellCorners& q, double inv2h, double& gx, double& gy) {
  gx = (q.b - q.a + q.d - q.c) * inv2h;
  gy = (q.c - q.a + q.d - q.b) * inv2h;
}

// Gradient of the bilinear interpolant at the 2x2 Gauss points of a cell.
// dx[q][r], dy[q][r]: derivative of point q's gradient w.r.t. corner r.
struct Quadrature {
  double dx[4][4];
  double dy[4][4];

  explicit Quadrature(double h) {
    const double s = 0.5 / std::sqrt(3.0);
    const double xi[2] = {0.5 - s, 0.5 + s};
    for (int q = 0; q < 4; ++q) {
      const double x = xi[q & 1], y = xi[q >> 1];
      const double ddx[4] = {-(1.0 - y), 1.0 - y, -y, y};
      const double ddy[4] = {-(1.0 - x), -x, 1.0 - x, x};
      for (int r = 0; r < 4; ++r) {
        dx[q][r] = ddx[r] / h;
        dy[q][r] = ddy[r] / h;
      }
    }
  }

  void gradients(const CellCorners& c, double* gx, double* gy) const {
    for (int q = 0; q < 4; ++q) {
      gx[q] = dx[q][0] * c.a + dx[q][1] * c.b + dx[q][2] * c.c + dx[q][3] * c.d;
      gy[q] = dy[q][0] * c.a + dy[q][1] * c.b + dy[q][2] * c.c + dy[q][3] * c.d;
    }
  }

  // Corner loads sum_q (fx_q dx[q][r] + fy_q dy[q][r]) scaled by w.
  void loads(const double* fx, const double* fy, double w, double* out) const {
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int q = 0; q < 4; ++q) s += fx[q] * dx[q][r] + fy[q] * dy[q][r];
      out[r] = w * s;
    }
  }
};

}  // namespace

double CellGradientField::magnitude(int ci, int cj) const {
  const std::size_t k = index(ci, cj);
  return std::hypot(gx[k], gy[k]);
}

double CellGradientField::max_magnitude() const {
  double m = 0.0;
  for (std::size_t k = 0; k < gx.size(); ++k) m = std::max(m, std::hypot(gx[k], gy[k]));
  return m;
}

CellGradientField discrete_gradient_field(const ScalarField& u) {
  const Grid& g = u.grid();
  CellGradientField f;
  f.grid = g;
  f.ncx = g.nx() - 1;
  f.ncy = g.ny() - 1;
  f.gx.resize(static_cast<std::size_t>(f.ncx) * f.ncy);
  f.gy.resize(f.gx.size());
  const double inv2h = 0.5 / g.h();
  for (int cj = 0; cj < f.ncy; ++cj)
    for (int ci = 0; ci < f.ncx; ++ci) {
      const std::size_t k = f.index(ci, cj);
      cell_gradient(corners(u.values(), g.nx(), ci, cj), inv2h, f.gx[k], f.gy[k]);
    }
  return f;
}

double dirichlet_energy(const ScalarField& u, double p, DirichletMode mode) {
  require(p >= 1.0, ErrorKind::InvalidArgument, "p must be at least 1");
  const Grid& g = u.grid();
  const int nx = g.nx(), ncx = nx - 1, ncy = g.ny() - 1;
  const Quadrature quad(g.h());
  std::vector<double> m2(static_cast<std::size_t>(ncx) * ncy * 4);
  double m2max = 0.0;
  for (int cj = 0; cj < ncy; ++cj)
    for (int ci = 0; ci < ncx; ++ci) {
      double gx[4], gy[4];
      quad.gradients(corners(u.values(), nx, ci, cj), gx, gy);
      const std::size_t k = 4 * (static_cast<std::size_t>(cj) * ncx + ci);
      for (int q = 0; q < 4; ++q) {
        m2[k + q] = gx[q] * gx[q] + gy[q] * gy[q];
        m2max = std::max(m2max, m2[k + q]);
      }
    }
  if (m2max == 0.0) return 0.0;
  const HalfPower pw(p);
  const bool use_log = mode == DirichletMode::LogDomain ||
                       (mode == DirichletMode::Auto && 0.5 * p * std::log(m2max) > kLogOverflow);
  const double inv = use_log ? 1.0 / m2max : 1.0;
  std::vector<double> rows(static_cast<std::size_t>(ncy), 0.0);
  for (int cj = 0; cj < ncy; ++cj) {
    double s = 0.0;
    const std::size_t k0 = 4 * static_cast<std::size_t>(cj) * ncx;
    for (std::size_t k = k0; k < k0 + 4 * static_cast<std::size_t>(ncx); ++k) s += pw(m2[k] * inv);
    rows[static_cast<std::size_t>(cj)] = s;
  }
  const double sum = ordered_sum(rows);
  const double w = 0.25 * g.h() * g.h() / p;
  if (!use_log) {
    const double e = w * sum;
    require(std::isfinite(e), ErrorKind::Instability, "Dirichlet energy overflow; rescale the problem");
    return e;
  }
  const double log_e = 0.5 * p * std::log(m2max) + std::log(sum) + std::log(w);
  require(log_e < 709.0, ErrorKind::Instability, "Dirichlet energy overflow despite log-domain evaluation; rescale the problem");
  return std::exp(log_e);
}

PenalizedEnergy::PenalizedEnergy(const DomainSpec& domain, const PenaltyParams& params)
    : domain_(&domain), params_(params) {
  params_.validate();
  require_same_grid(domain.omega_mask, domain.phi, "domain");
  const Grid& g = domain.grid();
  const std::size_t cells = static_cast<std::size_t>(g.nx() - 1) * static_cast<std::size_t>(g.ny() - 1);
  gx_.resize(4 * cells);
  gy_.resize(4 * cells);
  load_.resize(4 * cells);
  row_energy_.resize(static_cast<std::size_t>(g.ny()));
  row_max_.resize(static_cast<std::size_t>(g.ny()));
  row_a_.resize(static_cast<std::size_t>(g.ny()));
  row_b_.resize(static_cast<std::size_t>(g.ny()));
}

double PenalizedEnergy::dirichlet_pass(std::span<const double> u, bool want_flux, double* grad_max) {
  const Grid& g = domain_->grid();
  const int nx = g.nx(), ncx = g.nx() - 1, ncy = g.ny() - 1;
  const double h = g.h(), inv2h = 0.5 / h, p = params_.p;
  const Quadrature quad(h);
  hessian_ready_ = false;

  // Pass 1: Gauss-point gradients, their largest squared magnitude and the
  // largest cell-centre magnitude (reported as grad_max).
  for_each_row(ncy, [&](int cj) {
    double m2max = 0.0, c2max = 0.0;
    for (int ci = 0; ci < ncx; ++ci) {
      const std::size_t k = static_cast<std::size_t>(cj) * ncx + ci;
      const CellCorners cc = corners(u, nx, ci, cj);
      quad.gradients(cc, &gx_[4 * k], &gy_[4 * k]);
      for (int q = 0; q < 4; ++q) m2max = std::max(m2max, gx_[4 * k + q] * gx_[4 * k + q] + gy_[4 * k + q] * gy_[4 * k + q]);
      double cx, cy;
      cell_gradient(cc, inv2h, cx, cy);
      c2max = std::max(c2max, cx * cx + cy * cy);
    }
    row_max_[static_cast<std::size_t>(cj)] = m2max;
    row_a_[static_cast<std::size_t>(cj)] = c2max;
  });
  double m2max = 0.0, c2max = 0.0;
  for (int cj = 0; cj < ncy; ++cj) {
    m2max = std::max(m2max, row_max_[static_cast<std::size_t>(cj)]);
    c2max = std::max(c2max, row_a_[static_cast<std::size_t>(cj)]);
  }
  if (grad_max) *grad_max = std::sqrt(c2max);
  if (m2max == 0.0) {
    if (want_flux) std::fill(load_.begin(), load_.end(), 0.0);
    return 0.0;
  }

  const bool use_log = 0.5 * p * std::log(m2max) > kLogOverflow;
  const HalfPower coef_pw(p - 2.0);
  const double inv_g2 = use_log ? 1.0 / m2max : 1.0;
  const double w = 0.25 * h * h;

  // Pass 2: energy density and corner loads of the flux |grad u|^{p-2} grad u.
  for_each_row(ncy, [&](int cj) {
    double s = 0.0;
    for (int ci = 0; ci < ncx; ++ci) {
      const std::size_t k = static_cast<std::size_t>(cj) * ncx + ci;
      double fx[4], fy[4];
      for (int q = 0; q < 4; ++q) {
        const double gx = gx_[4 * k + q], gy = gy_[4 * k + q];
        const double m2 = gx * gx + gy * gy;
        const double c_scaled = coef_pw(m2 * inv_g2);
        s += c_scaled * m2 * inv_g2;
        const double c = use_log ? std::exp(0.5 * (p - 2.0) * std::log(m2)) : c_scaled;
        fx[q] = c * gx;
        fy[q] = c * gy;
      }
      if (want_flux) quad.loads(fx, fy, w, &load_[4 * k]);
    }
    row_energy_[static_cast<std::size_t>(cj)] = s;
  });
  const double sum = ordered_sum(std::span<const double>(row_energy_.data(), static_cast<std::size_t>(ncy)));
  double e = 0.0;
  if (!use_log) {
    e = w * sum / p;
  } else {
    const double log_e = 0.5 * p * std::log(m2max) + std::log(sum) + std::log(w / p);
    require(log_e < 709.0, ErrorKind::Instability, "Dirichlet energy overflow despite log-domain evaluation; rescale the problem");
    e = std::exp(log_e);
  }
  require(std::isfinite(e), ErrorKind::Instability, "Dirichlet energy is not finite; rescale the problem");
  return e;
}

void PenalizedEnergy::gather_loads(std::span<double> out) const {
  const Grid& g = domain_->grid();
  const int nx = g.nx(), ny = g.ny(), ncx = nx - 1, ncy = ny - 1;
  for_each_row(ny, [&](int j) {
    for (int i = 0; i < nx; ++i) {
      double s = 0.0;
      if (i > 0 && j > 0) s += load_[4 * (static_cast<std::size_t>(j - 1) * ncx + (i - 1)) + 3];
      if (i < ncx && j > 0) s += load_[4 * (static_cast<std::size_t>(j - 1) * ncx + i) + 2];
      if (i > 0 && j < ncy) s += load_[4 * (static_cast<std::size_t>(j) * ncx + (i - 1)) + 1];
      if (i < ncx && j < ncy) s += load_[4 * (static_cast<std::size_t>(j) * ncx + i)];
      out[static_cast<std::size_t>(j) * nx + i] = s;
    }
  });
}

double PenalizedEnergy::evaluate_dirichlet(std::span<const double> u, std::span<double> grad) {
  const bool want = !grad.empty();
  const double e = dirichlet_pass(u, want, nullptr);
  if (want) gather_loads(grad);
  return e;
}

void PenalizedEnergy::prepare_hessian(std::span<const double> u, std::span<const double> grad) {
  const Grid& g = domain_->grid();
  require(u.size() == g.size(), ErrorKind::GridMismatch, "field does not match domain grid");
  require(grad.empty() || grad.size() == g.size(), ErrorKind::GridMismatch, "gradient does not match domain grid");
  const int nx = g.nx(), ncx = nx - 1, ncy = g.ny() - 1;
  const std::size_t cells = static_cast<std::size_t>(ncx) * ncy;
  const double p = params_.p;
  const Quadrature quad(g.h());
  const HalfPower c_pw(p - 2.0), d_pw(p - 4.0);
  hc_.resize(4 * cells);
  ha_.resize(4 * cells);
  wall_.resize(g.size());
  for_each_row(ncy, [&](int cj) {
    for (int ci = 0; ci < ncx; ++ci) {
      const std::size_t k = static_cast<std::size_t>(cj) * ncx + ci;
      quad.gradients(corners(u, nx, ci, cj), &gx_[4 * k], &gy_[4 * k]);
      for (std::size_t q = 4 * k; q < 4 * k + 4; ++q) {
        const double m2 = gx_[q] * gx_[q] + gy_[q] * gy_[q];
        hc_[q] = c_pw(m2);
        ha_[q] = (p > 2.0 && m2 > 0.0) ? (p - 2.0) * (p >= 4.0 ? d_pw(m2) : hc_[q] / m2) : 0.0;
      }
    }
  });
  const double hh = g.h() * g.h(), sigma = params_.sigma;
  const auto phi = domain_->phi.values();
  for (std::size_t k = 0; k < wall_.size(); ++k) {
    const double t = u[k] - phi[k];
    const bool wall = (t < 0.0 && t >= -sigma) || (t == 0.0 && (grad.empty() || grad[k] > 0.0));
    wall_[k] = wall ? hh / (sigma * sigma) : 0.0;
  }
  hessian_ready_ = true;
}

void PenalizedEnergy::hessian_apply(std::span<const double> v, std::span<double> out) {
  const Grid& g = domain_->grid();
  require(hessian_ready_, ErrorKind::InvalidArgument, "hessian_apply called before prepare_hessian");
  require(v.size() == g.size() && out.size() == g.size(), ErrorKind::GridMismatch,
          "hessian_apply buffers do not match domain grid");
  const int nx = g.nx(), ncx = nx - 1, ncy = g.ny() - 1;
  const Quadrature quad(g.h());
  const double w = 0.25 * g.h() * g.h();
  for_each_row(ncy, [&](int cj) {
    for (int ci = 0; ci < ncx; ++ci) {
      const std::size_t k = static_cast<std::size_t>(cj) * ncx + ci;
      double vx[4], vy[4], fx[4], fy[4];
      quad.gradients(corners(v, nx, ci, cj), vx, vy);
      for (int q = 0; q < 4; ++q) {
        const std::size_t m = 4 * k + q;
        const double s = ha_[m] * (gx_[m] * vx[q] + gy_[m] * vy[q]);
        fx[q] = hc_[m] * vx[q] + s * gx_[m];
        fy[q] = hc_[m] * vy[q] + s * gy_[m];
      }
      quad.loads(fx, fy, w, &load_[4 * k]);
    }
  });
  gather_loads(out);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += wall_[k] * v[k];
}

void PenalizedEnergy::hessian_diagonal(std::span<const double> u, std::span<double> diag, double floor_rel,
                                       std::span<const double> grad) {
  const Grid& g = domain_->grid();
  require(u.size() == g.size() && diag.size() == g.size(), ErrorKind::GridMismatch,
          "hessian_diagonal buffers do not match domain grid");
  prepare_hessian(u, grad);
  const int nx = g.nx(), ncx = nx - 1, ncy = g.ny() - 1;
  const Quadrature quad(g.h());
  const double w = 0.25 * g.h() * g.h();
  std::fill(diag.begin(), diag.end(), 0.0);
  // Corner r: w sum_q [c |dG_q/du_r|^2 + a (G_q . dG_q/du_r)^2].
  for (int cj = 0; cj < ncy; ++cj)
    for (int ci = 0; ci < ncx; ++ci) {
      const std::size_t k = static_cast<std::size_t>(cj) * ncx + ci;
      const std::size_t node[4] = {static_cast<std::size_t>(cj) * nx + ci, static_cast<std::size_t>(cj) * nx + ci + 1,
                                   static_cast<std::size_t>(cj + 1) * nx + ci,
                                   static_cast<std::size_t>(cj + 1) * nx + ci + 1};
      for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int q = 0; q < 4; ++q) {
          const std::size_t m = 4 * k + q;
          const double ex = quad.dx[q][r], ey = quad.dy[q][r];
          const double proj = gx_[m] * ex + gy_[m] * ey;
          s += hc_[m] * (ex * ex + ey * ey) + ha_[m] * proj * proj;
        }
        diag[node[r]] += w * s;
      }
    }
  const double top = *std::max_element(diag.begin(), diag.end());
  const double floor = std::max(floor_rel * top, 1e-300);
  for (std::size_t k = 0; k < diag.size(); ++k) diag[k] = std::max(diag[k], floor) + wall_[k];
}

EnergyBreakdown PenalizedEnergy::evaluate(std::span<const double> u, std::span<double> grad, bool volume_gradient) {
  const Grid& g = domain_->grid();
  require(u.size() == g.size(), ErrorKind::GridMismatch, "field does not match domain grid");
  const bool want = !grad.empty();
  require(!want || grad.size() == g.size(), ErrorKind::GridMismatch, "gradient buffer does not match domain grid");

  EnergyBreakdown out;
  out.dirichlet = dirichlet_pass(u, want, &out.grad_max);
  if (want) gather_loads(grad);

  const int nx = g.nx(), ny = g.ny();
  const double hh = g.h() * g.h();
  const auto phi = domain_->phi.values();
  const auto mask = domain_->omega_mask.values();
  const double sigma = params_.sigma, delta = params_.delta;

  for_each_row(ny, [&](int j) {
    double obst = 0.0, meas = 0.0;
    for (int i = 0; i < nx; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * nx + i;
      const PenaltyValue gv = kernel::g_sigma(u[k] - phi[k], sigma);
      obst += gv.value;
      if (want) grad[k] += hh * gv.derivative;
      if (mask[k] < 0.5) meas += kernel::h_delta(u[k], delta).value;
    }
    row_a_[static_cast<std::size_t>(j)] = obst;
    row_b_[static_cast<std::size_t>(j)] = meas;
  });
  const std::size_t rows = static_cast<std::size_t>(ny);
  out.obstacle = hh * ordered_sum(std::span<const double>(row_a_.data(), rows));
  out.smoothed_measure = hh * ordered_sum(std::span<const double>(row_b_.data(), rows));
  const PenaltyValue fv = f_eps(out.smoothed_measure, params_.eps, params_.gamma);
  out.volume = fv.value;
  out.total = out.dirichlet + out.obstacle + out.volume;

  if (want) {
    const double scale = volume_gradient ? hh * fv.derivative : 0.0;
    for_each_row(ny, [&](int j) {
      for (int i = 0; i < nx; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * nx + i;
        if (mask[k] < 0.5) grad[k] += scale * kernel::h_delta(u[k], delta).derivative;
      }
    });
    for (std::size_t k = 0; k < grad.size(); ++k) {
      if (!std::isfinite(grad[k])) {
        const int i = static_cast<int>(k % static_cast<std::size_t>(nx));
        const int j = static_cast<int>(k / static_cast<std::size_t>(nx));
        fail(ErrorKind::Instability,
             "non-finite energy gradient at node (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  return out;
}

EnergyBreakdown eval_penalized_energy(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params) {
  require_same_grid(u, domain.omega_mask, "eval_penalized_energy");
  PenalizedEnergy energy(domain, params);
  return energy.evaluate(u.values(), {});
}

ScalarField eval_energy_gradient(const ScalarField& u, const DomainSpec& domain, const PenaltyParams& params) {
  require_same_grid(u, domain.omega_mask, "eval_energy_gradient");
  PenalizedEnergy energy(domain, params);
  ScalarField grad(u.grid(), 0.0);
  energy.evaluate(u.values(), grad.values());
  return grad;
}

ScalarField dirichlet_gradient(const ScalarField& u, double p) {
  DomainSpec scratch;
  scratch.omega_mask = ScalarField(u.grid(), 1.0);
  scratch.phi = ScalarField(u.grid(), 0.0);
  scratch.gamma = 1.0;
  PenaltyParams params;
  params.p = p;
  PenalizedEnergy energy(scratch, params);
  ScalarField grad(u.grid(), 0.0);
  energy.evaluate_dirichlet(u.values(), grad.values());
  return grad;
}

double eval_limit_energy(const ScalarField& u, const DomainSpec& domain, double eps, double p, double tau) {
  require(tau >= 0.0, ErrorKind::InvalidArgument, "tau must be nonnegative");
  const double dir = dirichlet_energy(u, p);
  return dir + f_eps(positive_volume_outside(u, domain, tau), eps, domain.gamma).value;
}

double variational_inequality_residual(const ScalarField& u, const ScalarField& v, const DomainSpec& domain,
                                       const PenaltyParams& params) {
  params.validate();
  require_same_grid(u, domain.omega_mask, "variational_inequality_residual (u)");
  require_same_grid(v, domain.omega_mask, "variational_inequality_residual (v)");
  for (std::size_t k = 0; k < v.size(); ++k)
    require(v[k] >= domain.phi[k], ErrorKind::InvalidArgument, "test function must satisfy v >= phi");

  const Grid& g = u.grid();
  const double hh = g.h() * g.h();
  const int nx = g.nx(), ncx = nx - 1, ncy = g.ny() - 1;
  std::vector<double> diff(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) diff[k] = v[k] - u[k];
  const Quadrature quad(g.h());
  const HalfPower coef(params.p - 2.0);

  std::vector<double> rows(static_cast<std::size_t>(ncy), 0.0);
  for (int cj = 0; cj < ncy; ++cj) {
    double s = 0.0;
    for (int ci = 0; ci < ncx; ++ci) {
      double vx[4], vy[4], dx[4], dy[4];
      quad.gradients(corners(v.values(), nx, ci, cj), vx, vy);
      quad.gradients(corners(diff, nx, ci, cj), dx, dy);
      for (int q = 0; q < 4; ++q) s += coef(vx[q] * vx[q] + vy[q] * vy[q]) * (vx[q] * dx[q] + vy[q] * dy[q]);
    }
    rows[static_cast<std::size_t>(cj)] = s;
  }
  const double flux_term = 0.25 * ordered_sum(rows);
  double meas = 0.0, lin = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (domain.inside(k)) continue;
    const PenaltyValue hv = h_delta(u[k], params.delta);
    meas += hv.value;
    lin += hv.derivative * diff[k];
  }
  const double fprime = f_eps(hh * meas, params.eps, params.gamma).derivative;
  return hh * flux_term + fprime * hh * lin;
}

}  // namespace fbopt
