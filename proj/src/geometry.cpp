#include "fbopt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "fbopt/error.hpp"

namespace fbopt {

Grid::Grid(int nx, int ny, double h, Point origin) : nx_(nx), ny_(ny), h_(h), origin_(origin) {
  require(nx >= 3 && ny >= 3, ErrorKind::Config, "grid needs at least 3x3 nodes");
  require(h > 0.0 && std::isfinite(h), ErrorKind::Config, "grid spacing must be positive");
}

ScalarField::ScalarField(const Grid& grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

ScalarField::ScalarField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
  require(values_.size() == grid_.size(), ErrorKind::GridMismatch, "field size does not match grid");
}

double ScalarField::min() const { return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end()); }

double ScalarField::max() const { return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end()); }

bool ScalarField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_grid(const ScalarField& a, const ScalarField& b, const char* what) {
  if (!(a.grid() == b.grid())) fail(ErrorKind::GridMismatch, std::string("grid mismatch: ") + what);
}

Grid build_grid(const Rect& bbox, double h) {
  require(h > 0.0 && std::isfinite(h), ErrorKind::Config, "grid spacing h must be positive");
  const double wx = bbox.xmax - bbox.xmin;
  const double wy = bbox.ymax - bbox.ymin;
  require(wx > 0.0 && wy > 0.0, ErrorKind::Config, "bounding box is empty");
  // Side lengths are expected to be (close to) multiples of h; 1e-9 absorbs
  // representation error in values like 4/h.
  const double slack = 1e-9;
  require(wx >= 4.0 * h * (1.0 - slack) && wy >= 4.0 * h * (1.0 - slack), ErrorKind::Config,
          "bounding box sides must be at least 4h");
  const int nx = static_cast<int>(std::floor(wx / h + slack)) + 1;
  const int ny = static_cast<int>(std::floor(wy / h + slack)) + 1;
  return Grid(nx, ny, h, {bbox.xmin, bbox.ymin});
}

ScalarField rasterize_disk(Point center, double radius, const Grid& grid) {
  require(radius > 0.0, ErrorKind::InvalidArgument, "disk radius must be positive");
  ScalarField mask(grid, 0.0);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i)
      if (distance(grid.node(i, j), center) <= radius) mask(i, j) = 1.0;
  return mask;
}

double plateau_profile(const PlateauSpec& spec, double r) {
  if (r <= spec.r0) return spec.M;
  if (r >= spec.r0 + spec.w) return 0.0;
  const double s = (r - spec.r0) / spec.w;
  return spec.M * (1.0 - s * s * (3.0 - 2.0 * s));
}

ScalarField synth_plateau_bump(const PlateauSpec& spec, Point center, const Grid& grid, double omega_radius) {
  require(spec.r0 > 0.0 && spec.M > 0.0 && spec.w > 0.0, ErrorKind::Config, "plateau r0, M, w must be positive");
  require(spec.r0 + spec.w < omega_radius - 2.0 * grid.h(), ErrorKind::Config,
          "obstacle support reaches the room boundary (need r0 + w < R_omega - 2h)");
  ScalarField phi(grid, 0.0);
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) phi(i, j) = plateau_profile(spec, distance(grid.node(i, j), center));
  return phi;
}

double positive_volume_outside(const ScalarField& u, const DomainSpec& domain, double tau) {
  require(tau >= 0.0, ErrorKind::InvalidArgument, "tau must be nonnegative");
  require_same_grid(u, domain.omega_mask, "positive_volume_outside");
  std::size_t count = 0;
  for (std::size_t k = 0; k < u.size(); ++k)
    if (!domain.inside(k) && u[k] > tau) ++count;
  const double h = u.grid().h();
  return h * h * static_cast<double>(count);
}

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace

double diameter_positivity(const ScalarField& u, double tau) {
  const Grid& g = u.grid();
  std::vector<Point> pts;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (u(i, j) > tau) pts.push_back(g.node(i, j));
  require(!pts.empty(), ErrorKind::EmptyPositivity, "field is identically nonpositive");
  const std::vector<Point> hull = convex_hull(std::move(pts));
  double best = 0.0;
  for (std::size_t a = 0; a < hull.size(); ++a)
    for (std::size_t b = a + 1; b < hull.size(); ++b) best = std::max(best, distance(hull[a], hull[b]));
  return best;
}

void validate_domain(const DomainSpec& domain) {
  const ScalarField& mask = domain.omega_mask;
  const ScalarField& phi = domain.phi;
  require_same_grid(mask, phi, "mask vs phi");
  require(domain.gamma > 0.0 && std::isfinite(domain.gamma), ErrorKind::Config, "gamma must be positive");
  require(phi.all_finite(), ErrorKind::Config, "obstacle has non-finite values");
  const Grid& g = mask.grid();
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const double m = mask(i, j);
      require(m == 0.0 || m == 1.0, ErrorKind::Config, "mask values must be 0 or 1");
      const double v = phi(i, j);
      require(v >= 0.0, ErrorKind::Config, "obstacle must be nonnegative");
      if (v == 0.0) continue;
      // Nonzero obstacle needs the node and its 8 neighbours inside the room.
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int a = i + di, b = j + dj;
          const bool in = a >= 0 && b >= 0 && a < g.nx() && b < g.ny() && mask(a, b) == 1.0;
          require(in, ErrorKind::Config, "obstacle must vanish outside the room and one cell from its boundary");
        }
    }
  }
}

DomainSpec make_radial_domain(const Grid& grid, const RadialMeta& meta, double gamma) {
  DomainSpec d;
  d.omega_mask = rasterize_disk(meta.center, meta.omega_radius, grid);
  d.phi = synth_plateau_bump({meta.r0, meta.M, meta.w}, meta.center, grid, meta.omega_radius);
  d.gamma = gamma;
  d.meta = meta;
  validate_domain(d);
  return d;
}

double outside_capacity(const DomainSpec& domain) {
  std::size_t count = 0;
  for (std::size_t k = 0; k < domain.omega_mask.size(); ++k)
    if (!domain.inside(k)) ++count;
  const double h = domain.grid().h();
  return h * h * static_cast<double>(count);
}

double c1_norm(const ScalarField& f) {
  const Grid& g = f.grid();
  double vmax = 0.0, gmax = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      vmax = std::max(vmax, std::abs(f(i, j)));
      if (i == 0 || j == 0 || i == g.nx() - 1 || j == g.ny() - 1) continue;
      const double gx = (f(i + 1, j) - f(i - 1, j)) / (2.0 * g.h());
      const double gy = (f(i, j + 1) - f(i, j - 1)) / (2.0 * g.h());
      gmax = std::max(gmax, std::hypot(gx, gy));
    }
  return vmax + gmax;
}

double positivity_diameter_bound(const DomainSpec& domain, double eps, double c_n) {
  require(eps > 0.0, ErrorKind::InvalidArgument, "eps must be positive");
  const double room = diameter_positivity(domain.omega_mask, 0.5);
  return room + 1.0 + c_n * domain.gamma * (c1_norm(domain.phi) + 1.0 / eps) / eps;
}

bool grid_covers_padded_room(const DomainSpec& domain, double pad) {
  const Grid& g = domain.grid();
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  bool any = false;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (domain.omega_mask(i, j) > 0.5) {
        const Point p = g.node(i, j);
        xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
        any = true;
      }
  if (!any) return false;
  const Rect e = g.extent();
  return e.xmin < xmin - pad && e.ymin < ymin - pad && e.xmax > xmax + pad && e.ymax > ymax + pad;
}

double default_theta_ref(const DomainSpec& domain) {
  if (domain.meta) {
    const RadialMeta& m = *domain.meta;
    const double r_star = std::sqrt(m.omega_radius * m.omega_radius + domain.gamma / std::numbers::pi);
    return 0.1 * m.M / (r_star - m.r0);
  }
  const double phi_max = domain.phi.max();
  if (phi_max <= 0.0) return 0.0;
  const double room = diameter_positivity(domain.omega_mask, 0.5);
  return 0.05 * phi_max / std::max(room, domain.grid().h());
}

void write_field(std::ostream& os, const ScalarField& f) {
  const Grid& g = f.grid();
  os << std::setprecision(17);
  os << g.nx() << ' ' << g.ny() << ' ' << g.h() << ' ' << g.origin().x << ' ' << g.origin().y << '\n';
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      if (i) os << ' ';
      os << f(i, j);
    }
    os << '\n';
  }
}

ScalarField read_field(std::istream& is) {
  int nx = 0, ny = 0;
  double h = 0.0, ox = 0.0, oy = 0.0;
  std::string header;
  require(static_cast<bool>(std::getline(is, header)), ErrorKind::Io, "missing field header");
  std::istringstream hs(header);
  require(static_cast<bool>(hs >> nx >> ny >> h >> ox >> oy), ErrorKind::Io, "malformed field header: " + header);
  require(nx >= 3 && ny >= 3 && h > 0.0, ErrorKind::Io, "invalid field dimensions");
  const Grid g(nx, ny, h, {ox, oy});
  std::vector<double> values(g.size());
  for (double& v : values) {
    std::string tok;
    require(static_cast<bool>(is >> tok), ErrorKind::Io, "truncated field data");
    try {
      std::size_t used = 0;
      v = std::stod(tok, &used);
      require(used == tok.size(), ErrorKind::Io, "bad number in field: " + tok);
    } catch (const std::logic_error&) {
      fail(ErrorKind::Io, "bad number in field: " + tok);
    }
  }
  return ScalarField(g, std::move(values));
}

void save_field(const std::string& path, const ScalarField& f) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path);
  write_field(os, f);
  require(static_cast<bool>(os), ErrorKind::Io, "write failed for " + path);
}

ScalarField load_field(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot read " + path);
  return read_field(is);
}

}  // namespace fbopt
