#include "fbopt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "fbopt/energy.hpp"
#include "fbopt/error.hpp"

namespace fbopt {

namespace {

bool on_rim(const Grid& g, int i, int j) { return i == 0 || j == 0 || i == g.nx() - 1 || j == g.ny() - 1; }

// Marks nodes within `reach` of any segment of c.
void mark_near(const ContourSet& c, const Grid& g, double reach, std::vector<char>& mark) {
  const double h = g.h();
  const Point o = g.origin();
  auto mark_segment = [&](Point a, Point b) {
    const int i0 = std::max(0, static_cast<int>(std::floor((std::min(a.x, b.x) - reach - o.x) / h)));
    const int i1 = std::min(g.nx() - 1, static_cast<int>(std::ceil((std::max(a.x, b.x) + reach - o.x) / h)));
    const int j0 = std::max(0, static_cast<int>(std::floor((std::min(a.y, b.y) - reach - o.y) / h)));
    const int j1 = std::min(g.ny() - 1, static_cast<int>(std::ceil((std::max(a.y, b.y) + reach - o.y) / h)));
    const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        const Point p = g.node(i, j);
        double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        if (distance(p, {a.x + t * dx, a.y + t * dy}) <= reach) mark[g.index(i, j)] = 1;
      }
  };
  for (const Polyline& pl : c.polylines) {
    const std::size_t n = pl.points.size();
    if (n == 1) mark_segment(pl.points[0], pl.points[0]);
    for (std::size_t k = 0; k + 1 < n; ++k) mark_segment(pl.points[k], pl.points[k + 1]);
    if (pl.closed && n > 2) mark_segment(pl.points[n - 1], pl.points[0]);
  }
}

}  // namespace

RadialOracle RadialOracle::make(const RadialMeta& meta, double gamma) {
  RadialOracle o;
  o.center = meta.center;
  o.R_omega = meta.omega_radius;
  o.r0 = meta.r0;
  o.w = meta.w;
  o.M = meta.M;
  o.gamma = gamma;
  o.R_star = std::sqrt(o.R_omega * o.R_omega + gamma / std::numbers::pi);
  o.lip = o.M / (o.R_star - o.r0);
  o.validate();
  return o;
}

void RadialOracle::validate() const {
  require(R_omega > 0.0 && gamma > 0.0 && M > 0.0 && r0 >= 0.0 && w >= 0.0, ErrorKind::InvalidArgument,
          "radial oracle parameters must be positive");
  require(R_star > R_omega, ErrorKind::InvalidArgument, "R_star must exceed R_omega");
  require(lip > 0.0 && std::isfinite(lip), ErrorKind::InvalidArgument, "oracle slope must be positive");
  const double area = std::numbers::pi * (R_star * R_star - R_omega * R_omega);
  require(std::abs(area - gamma) <= 1e-12 * gamma, ErrorKind::InvalidArgument,
          "oracle annulus area does not match gamma");
}

ScalarField radial_cone_field(const RadialOracle& oracle, const Grid& grid) {
  oracle.validate();
  const Rect e = grid.extent();
  const double reach = oracle.R_star + 2.0 * grid.h();
  require(oracle.center.x - reach >= e.xmin && oracle.center.x + reach <= e.xmax &&
              oracle.center.y - reach >= e.ymin && oracle.center.y + reach <= e.ymax,
          ErrorKind::InvalidArgument, "oracle support leaks outside the grid");
  ScalarField u(grid, 0.0);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const double r = distance(grid.node(i, j), oracle.center);
      double v = 0.0;
      if (r <= oracle.r0)
        v = oracle.M;
      else if (r < oracle.R_star)
        v = oracle.M * (oracle.R_star - r) / (oracle.R_star - oracle.r0);
      u(i, j) = v;
    }
  return u;
}

OracleFeasibility check_oracle(const RadialOracle& oracle, int samples) {
  oracle.validate();
  require(samples >= 2, ErrorKind::InvalidArgument, "need at least two samples");
  const PlateauSpec plateau{oracle.r0, oracle.M, oracle.w};
  OracleFeasibility f;
  for (int k = 0; k < samples; ++k) {
    const double r = oracle.R_star * k / (samples - 1);
    const double phi = plateau_profile(plateau, r);
    double cone = 0.0;
    if (r <= oracle.r0)
      cone = oracle.M;
    else if (r < oracle.R_star)
      cone = oracle.M * (oracle.R_star - r) / (oracle.R_star - oracle.r0);
    f.max_violation = std::max(f.max_violation, phi - cone);
    if (r < oracle.R_star) f.lip_lower = std::max(f.lip_lower, phi / (oracle.R_star - r));
  }
  return f;
}

double radial_p_harmonic(double A, double B, double p, double r) {
  require(r > 0.0, ErrorKind::InvalidArgument, "radius must be positive");
  require(p > 2.0, ErrorKind::InvalidArgument, "p must exceed 2");
  return A * std::pow(r, (p - 2.0) / (p - 1.0)) + B;
}

ScalarField plap_residual_field(const ScalarField& u, double p) {
  require(p >= 2.0, ErrorKind::InvalidArgument, "p must be at least 2");
  ScalarField r = dirichlet_gradient(u, p);
  const Grid& g = u.grid();
  const double inv = -1.0 / (g.h() * g.h());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) r(i, j) = on_rim(g, i, j) ? 0.0 : r(i, j) * inv;
  return r;
}

ScalarField gradient_magnitude_field(const ScalarField& u) {
  const Grid& g = u.grid();
  const double inv2h = 0.5 / g.h();
  ScalarField out(g, 0.0);
  for (int j = 1; j + 1 < g.ny(); ++j)
    for (int i = 1; i + 1 < g.nx(); ++i)
      out(i, j) = std::hypot((u(i + 1, j) - u(i - 1, j)) * inv2h, (u(i, j + 1) - u(i, j - 1)) * inv2h);
  return out;
}

ScalarField laplacian_field(const ScalarField& u) {
  const Grid& g = u.grid();
  const double inv = 1.0 / (g.h() * g.h());
  ScalarField out(g, 0.0);
  for (int j = 1; j + 1 < g.ny(); ++j)
    for (int i = 1; i + 1 < g.nx(); ++i)
      out(i, j) = (u(i + 1, j) + u(i - 1, j) + u(i, j + 1) + u(i, j - 1) - 4.0 * u(i, j)) * inv;
  return out;
}

ScalarField inflap_residual_field(const ScalarField& u) {
  require(u.all_finite(), ErrorKind::InvalidArgument, "field has non-finite values");
  const Grid& g = u.grid();
  const double h = g.h(), inv2h = 0.5 / h, inv_hh = 1.0 / (h * h);
  const ScalarField mag = gradient_magnitude_field(u);
  const double floor = 1e-8 * mag.max();
  ScalarField out(g, 0.0);
  for (int j = 1; j + 1 < g.ny(); ++j)
    for (int i = 1; i + 1 < g.nx(); ++i) {
      if (mag(i, j) < floor || mag(i, j) == 0.0) continue;
      const double ux = (u(i + 1, j) - u(i - 1, j)) * inv2h;
      const double uy = (u(i, j + 1) - u(i, j - 1)) * inv2h;
      const double uxx = (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j)) * inv_hh;
      const double uyy = (u(i, j + 1) - 2.0 * u(i, j) + u(i, j - 1)) * inv_hh;
      const double uxy = (u(i + 1, j + 1) - u(i + 1, j - 1) - u(i - 1, j + 1) + u(i - 1, j - 1)) * 0.25 * inv_hh;
      out(i, j) = ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy;
    }
  return out;
}

const char* region_name(Region r) {
  switch (r) {
    case Region::Contact: return "contact";
    case Region::Heated: return "heated";
    case Region::Insulation: return "insulation";
    case Region::Dead: return "dead";
    case Region::Band: return "band";
  }
  return "unknown";
}

std::size_t RegionLabels::count(Region r) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), r)); }

RegionLabels label_regions(const ScalarField& u, const DomainSpec& domain, const LabelOptions& opts) {
  require_same_grid(u, domain.omega_mask, "label_regions");
  require(opts.tau >= 0.0 && opts.band_cells >= 0.0, ErrorKind::InvalidArgument, "tau and band must be nonnegative");
  const Grid& g = u.grid();
  const double ctol = opts.contact_tol >= 0.0 ? opts.contact_tol : default_contact_tol(domain);
  RegionLabels out;
  out.grid = g;
  out.labels.resize(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (domain.inside(k))
      out.labels[k] = u[k] - domain.phi[k] <= ctol ? Region::Contact : Region::Heated;
    else
      out.labels[k] = u[k] > opts.tau ? Region::Insulation : Region::Dead;
  }
  std::vector<char> band(u.size(), 0);
  const double reach = opts.band_cells * g.h();
  mark_near(extract_contour(u, opts.tau), g, reach, band);
  if (ctol > 0.0) mark_near(interior_contact_boundary(u, domain, ctol), g, reach, band);
  for (std::size_t k = 0; k < u.size(); ++k)
    if (band[k]) out.labels[k] = Region::Band;
  return out;
}

RegionSignReport region_sign_check(const ScalarField& u, const DomainSpec& domain, double p,
                                   const RegionLabels& labels, double tau, double tol_factor) {
  require_same_grid(u, domain.omega_mask, "region_sign_check");
  require(labels.grid == u.grid() && labels.labels.size() == u.size(), ErrorKind::GridMismatch,
          "labels do not match the field grid");
  const ScalarField res = plap_residual_field(u, p);
  const double G = discrete_gradient_field(u).max_magnitude();
  const double L = std::max(0.5 * (u.max() > tau ? diameter_positivity(u, tau) : 0.0), u.grid().h());

  RegionSignReport rep;
  rep.p = p;
  rep.scale = std::max(1.0, std::pow(G, p - 1.0)) / L;
  rep.tol = tol_factor * u.grid().h() * rep.scale;
  for (Region r : {Region::Heated, Region::Insulation, Region::Contact, Region::Dead}) {
    RegionCheck c;
    c.region = r;
    for (std::size_t k = 0; k < u.size(); ++k) {
      if (labels.labels[k] != r) continue;
      ++c.nodes;
      double v = 0.0;
      switch (r) {
        case Region::Heated:
        case Region::Insulation: v = std::abs(res[k]); break;
        case Region::Contact: v = std::max(res[k], 0.0); break;
        case Region::Dead: v = std::max(-res[k], 0.0); break;
        case Region::Band: break;
      }
      c.max_violation = std::max(c.max_violation, v);
    }
    c.pass = c.max_violation <= rep.tol;
    rep.pass = rep.pass && c.pass;
    rep.regions.push_back(c);
  }
  return rep;
}

BoundsReport bounds_and_constraints_check(const ScalarField& u, const DomainSpec& domain, const BoundsOptions& opts) {
  require_same_grid(u, domain.omega_mask, "bounds_and_constraints_check");
  const double pmax = domain.phi.max();
  const double unit = pmax > 0.0 ? pmax : 1.0;
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < u.size(); ++k) gap = std::min(gap, u[k] - domain.phi[k]);

  BoundsReport rep;
  auto add = [&](std::string name, double value, double limit, bool pass) {
    rep.items.push_back({std::move(name), value, limit, pass});
    rep.pass = rep.pass && pass;
  };
  const double lo = u.min() / unit, hi = (u.max() - pmax) / unit;
  add("min_u", lo, -opts.bound_tol, lo >= -opts.bound_tol);
  add("max_u_minus_max_phi", hi, opts.bound_tol, hi <= opts.bound_tol);
  add("min_u_minus_phi", gap / unit, -opts.obstacle_tol, gap / unit >= -opts.obstacle_tol);
  const double vol_err = (positive_volume_outside(u, domain, opts.tau) - domain.gamma) / domain.gamma;
  if (opts.require_saturation)
    add("volume_rel_error", vol_err, opts.volume_rel_tol, std::abs(vol_err) <= opts.volume_rel_tol);
  else
    add("volume_excess", vol_err, opts.volume_rel_tol, vol_err <= opts.volume_rel_tol);
  const double diam = u.max() > opts.tau ? diameter_positivity(u, opts.tau) : 0.0;
  const double bound = positivity_diameter_bound(domain, opts.eps, opts.c_n);
  add("diameter", diam, bound, diam <= bound);
  return rep;
}

void write_report(std::ostream& os, const RegionSignReport& r) {
  os << "p=" << r.p << "\nscale=" << r.scale << "\ntol=" << r.tol << '\n';
  for (const RegionCheck& c : r.regions) {
    const char* n = region_name(c.region);
    os << n << ".nodes=" << c.nodes << '\n' << n << ".max_violation=" << c.max_violation << '\n'
       << n << ".pass=" << (c.pass ? 1 : 0) << '\n';
  }
  os << "pass=" << (r.pass ? 1 : 0) << '\n';
}

void write_report(std::ostream& os, const BoundsReport& r) {
  for (const CheckItem& c : r.items)
    os << c.name << '=' << c.value << '\n' << c.name << ".limit=" << c.limit << '\n' << c.name << ".pass=" << (c.pass ? 1 : 0) << '\n';
  os << "pass=" << (r.pass ? 1 : 0) << '\n';
}

void write_report(std::ostream& os, const RadialOracle& o, const OracleFeasibility& f) {
  os << "R_omega=" << o.R_omega << "\nr0=" << o.r0 << "\nw=" << o.w << "\nM=" << o.M << "\ngamma=" << o.gamma
     << "\nR_star=" << o.R_star << "\nlip=" << o.lip << "\ncone_obstacle_violation=" << f.max_violation
     << "\nlip_lower_bound=" << f.lip_lower << "\nassumption=radial symmetry of the minimizer\n";
}

}  // namespace fbopt
