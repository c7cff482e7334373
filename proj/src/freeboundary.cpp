#include "fbopt/freeboundary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "fbopt/error.hpp"

namespace fbopt {

std::size_t ContourSet::vertex_count() const {
  std::size_t n = 0;
  for (const Polyline& p : polylines) n += p.points.size();
  return n;
}

double ContourSet::length() const {
  double len = 0.0;
  for (const Polyline& p : polylines) {
    for (std::size_t k = 1; k < p.points.size(); ++k) len += distance(p.points[k - 1], p.points[k]);
    if (p.closed && p.points.size() > 2) len += distance(p.points.back(), p.points.front());
  }
  return len;
}

namespace {

// Edge keys: horizontal edge from node (i,j) to (i+1,j) is 2k, vertical edge
// from (i,j) to (i,j+1) is 2k+1, with k the node index.
struct Segment {
  std::size_t e0, e1;
};

ContourSet extract_impl(const ScalarField& u, double tau, const ScalarField* mask) {
  const Grid& g = u.grid();
  const int nx = g.nx(), ny = g.ny();
  std::unordered_map<std::size_t, Point> crossing;
  std::vector<Segment> segments;

  auto edge_point = [&](std::size_t key) -> Point {
    auto it = crossing.find(key);
    if (it != crossing.end()) return it->second;
    const std::size_t k = key / 2;
    const int i = static_cast<int>(k % static_cast<std::size_t>(nx));
    const int j = static_cast<int>(k / static_cast<std::size_t>(nx));
    const bool vertical = key % 2 == 1;
    const int i1 = vertical ? i : i + 1, j1 = vertical ? j + 1 : j;
    const double va = u(i, j), vb = u(i1, j1);
    const double t = std::clamp((tau - va) / (vb - va), 0.0, 1.0);
    const Point pa = g.node(i, j), pb = g.node(i1, j1);
    const Point p{pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y)};
    crossing.emplace(key, p);
    return p;
  };

  for (int cj = 0; cj + 1 < ny; ++cj) {
    for (int ci = 0; ci + 1 < nx; ++ci) {
      if (mask) {
        const ScalarField& m = *mask;
        if (!(m(ci, cj) > 0.5 && m(ci + 1, cj) > 0.5 && m(ci, cj + 1) > 0.5 && m(ci + 1, cj + 1) > 0.5)) continue;
      }
      // Corners counter-clockwise: 0 (i,j), 1 (i+1,j), 2 (i+1,j+1), 3 (i,j+1).
      const double v0 = u(ci, cj), v1 = u(ci + 1, cj), v2 = u(ci + 1, cj + 1), v3 = u(ci, cj + 1);
      const int code = (v0 > tau ? 1 : 0) | (v1 > tau ? 2 : 0) | (v2 > tau ? 4 : 0) | (v3 > tau ? 8 : 0);
      if (code == 0 || code == 15) continue;
      const std::size_t k = g.index(ci, cj);
      // Edges: bottom (0-1), right (1-2), top (3-2), left (0-3).
      const std::size_t bottom = 2 * k, left = 2 * k + 1;
      const std::size_t right = 2 * g.index(ci + 1, cj) + 1, top = 2 * g.index(ci, cj + 1);
      auto add = [&](std::size_t a, std::size_t b) { segments.push_back({a, b}); };
      switch (code) {
        case 1: case 14: add(left, bottom); break;
        case 2: case 13: add(bottom, right); break;
        case 3: case 12: add(left, right); break;
        case 4: case 11: add(right, top); break;
        case 6: case 9: add(bottom, top); break;
        case 7: case 8: add(left, top); break;
        case 5: case 10: {
          const bool center_above = 0.25 * (v0 + v1 + v2 + v3) > tau;
          // Corners 0 and 2 share a state for code 5, corners 1 and 3 for 10.
          const bool join_02 = (code == 5) == center_above;
          if (join_02) {
            add(left, top);
            add(bottom, right);
          } else {
            add(left, bottom);
            add(right, top);
          }
          break;
        }
        default: break;
      }
    }
  }

  // Stitch segments sharing edge crossings into polylines.
  std::unordered_map<std::size_t, std::vector<std::size_t>> at_edge;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    at_edge[segments[s].e0].push_back(s);
    at_edge[segments[s].e1].push_back(s);
  }
  std::vector<char> used(segments.size(), 0);
  auto next_segment = [&](std::size_t edge, std::size_t from) -> std::ptrdiff_t {
    for (std::size_t s : at_edge[edge])
      if (s != from && !used[s]) return static_cast<std::ptrdiff_t>(s);
    return -1;
  };
  auto other_end = [&](std::size_t s, std::size_t edge) {
    return segments[s].e0 == edge ? segments[s].e1 : segments[s].e0;
  };

  // Open chains start at edges touched by a single segment; the rest close.
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < segments.size(); ++s) order.push_back(s);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto open = [&](std::size_t s) { return at_edge[segments[s].e0].size() == 1 || at_edge[segments[s].e1].size() == 1; };
    return open(a) && !open(b);
  });

  ContourSet out;
  const double merge_tol = 1e-12 * g.h();
  for (std::size_t s0 : order) {
    if (used[s0]) continue;
    std::size_t start = segments[s0].e0;
    if (at_edge[segments[s0].e1].size() == 1 && at_edge[start].size() != 1) start = segments[s0].e1;
    std::vector<std::size_t> chain{start};
    std::size_t s = s0, edge = start;
    bool closed = false;
    for (;;) {
      used[s] = 1;
      edge = other_end(s, edge);
      if (edge == start) {
        closed = true;
        break;
      }
      chain.push_back(edge);
      const std::ptrdiff_t nxt = next_segment(edge, s);
      if (nxt < 0) break;
      s = static_cast<std::size_t>(nxt);
    }
    Polyline pl;
    pl.closed = closed;
    for (std::size_t e : chain) {
      const Point p = edge_point(e);
      if (!pl.points.empty() && distance(pl.points.back(), p) <= merge_tol) continue;
      pl.points.push_back(p);
    }
    if (pl.closed && pl.points.size() > 1 && distance(pl.points.back(), pl.points.front()) <= merge_tol)
      pl.points.pop_back();
    if (pl.closed && pl.points.size() < 3) pl.closed = false;
    if (pl.points.size() >= 2) out.polylines.push_back(std::move(pl));
  }
  return out;
}

double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, {a.x + t * dx, a.y + t * dy});
}

template <class Fn>
void for_each_segment(const ContourSet& c, Fn&& fn) {
  for (const Polyline& pl : c.polylines) {
    const auto& v = pl.points;
    if (v.size() == 1) fn(v[0], v[0]);
    for (std::size_t k = 1; k < v.size(); ++k) fn(v[k - 1], v[k]);
    if (pl.closed && v.size() > 2) fn(v.back(), v.front());
  }
}

// Length of segment ab inside the closed disk B_r(c).
double clipped_length(Point a, Point b, Point c, double r) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double fx = a.x - c.x, fy = a.y - c.y;
  const double A = dx * dx + dy * dy;
  if (A == 0.0) return 0.0;
  const double B = 2.0 * (fx * dx + fy * dy), C = fx * fx + fy * fy - r * r;
  const double disc = B * B - 4.0 * A * C;
  if (disc <= 0.0) return 0.0;
  const double sq = std::sqrt(disc);
  const double t0 = std::max(0.0, (-B - sq) / (2.0 * A)), t1 = std::min(1.0, (-B + sq) / (2.0 * A));
  return t1 > t0 ? (t1 - t0) * std::sqrt(A) : 0.0;
}

}  // namespace

ContourSet extract_contour(const ScalarField& u, double tau) { return extract_impl(u, tau, nullptr); }

ContourSet extract_contour(const ScalarField& u, double tau, const ScalarField& cell_mask) {
  require_same_grid(u, cell_mask, "extract_contour");
  return extract_impl(u, tau, &cell_mask);
}

double default_contact_tol(const DomainSpec& domain) { return 1e-3 * domain.phi.max(); }

ContourSet interior_contact_boundary(const ScalarField& u, const DomainSpec& domain, double tol) {
  require(tol > 0.0, ErrorKind::InvalidArgument, "contact tolerance must be positive");
  require_same_grid(u, domain.phi, "interior_contact_boundary");
  ScalarField gap(u.grid(), 0.0);
  for (std::size_t k = 0; k < u.size(); ++k) gap[k] = u[k] - domain.phi[k];
  return extract_impl(gap, tol, &domain.omega_mask);
}

double distance_to_contour(Point p, const ContourSet& c) {
  double best = std::numeric_limits<double>::infinity();
  for_each_segment(c, [&](Point a, Point b) { best = std::min(best, point_segment_distance(p, a, b)); });
  return best;
}

double directed_hausdorff(const ContourSet& a, const ContourSet& b) {
  double worst = 0.0;
  for (const Polyline& pl : a.polylines)
    for (Point p : pl.points) worst = std::max(worst, distance_to_contour(p, b));
  return worst;
}

double hausdorff_distance(const ContourSet& a, const ContourSet& b) {
  if (a.empty() || b.empty()) fail(ErrorKind::NoBoundary, "no boundary: Hausdorff distance needs two nonempty contours");
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

std::vector<DensityRow> density_ratios(const ContourSet& contour, std::span<const double> radii,
                                       std::size_t max_centers) {
  if (contour.empty()) fail(ErrorKind::NoBoundary, "no boundary: density ratios need a nonempty contour");
  std::vector<Point> all;
  for (const Polyline& pl : contour.polylines) all.insert(all.end(), pl.points.begin(), pl.points.end());
  const std::size_t stride = std::max<std::size_t>(1, (all.size() + max_centers - 1) / std::max<std::size_t>(1, max_centers));
  std::vector<DensityRow> rows;
  for (double r : radii) {
    require(r > 0.0, ErrorKind::InvalidArgument, "density radii must be positive");
    DensityRow row{r, std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t k = 0; k < all.size(); k += stride) {
      double len = 0.0;
      for_each_segment(contour, [&](Point a, Point b) { len += clipped_length(a, b, all[k], r); });
      row.min_ratio = std::min(row.min_ratio, len / r);
      row.max_ratio = std::max(row.max_ratio, len / r);
    }
    rows.push_back(row);
  }
  return rows;
}

GrowthScan growth_scan(const ScalarField& u, double tau, const DomainSpec& domain, const GrowthOptions& opts) {
  require_same_grid(u, domain.omega_mask, "growth_scan");
  require(opts.radius_count >= 1 && opts.max_samples > 0 && opts.max_centers > 0 && opts.band >= 0.0,
          ErrorKind::InvalidArgument, "growth scan options must be positive");
  const Grid& g = u.grid();
  const double h = g.h();
  const ContourSet boundary = extract_contour(u, tau);
  if (boundary.empty()) fail(ErrorKind::NoBoundary, "no boundary: {u > tau} has no isoline");

  const double ctol = opts.contact_tol >= 0.0 ? opts.contact_tol : default_contact_tol(domain);
  std::vector<char> contact(u.size(), 0);
  for (std::size_t k = 0; k < u.size(); ++k) contact[k] = domain.inside(k) && u[k] - domain.phi[k] <= ctol;

  GrowthScan scan;

  // Linear growth over a strided sample of {u > tau} minus the contact set.
  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < u.size(); ++k)
    if (u[k] > tau && !contact[k]) candidates.push_back(k);
  const std::size_t stride =
      std::max<std::size_t>(1, (candidates.size() + static_cast<std::size_t>(opts.max_samples) - 1) /
                                   static_cast<std::size_t>(opts.max_samples));
  double theta_lin = std::numeric_limits<double>::infinity();
  for (std::size_t q = opts.seed % stride; q < candidates.size(); q += stride) {
    const std::size_t k = candidates[q];
    const Point p = g.node(static_cast<int>(k % static_cast<std::size_t>(g.nx())),
                           static_cast<int>(k / static_cast<std::size_t>(g.nx())));
    const double dist = distance_to_contour(p, boundary);
    if (dist <= 0.0 || dist < opts.band * h) continue;
    theta_lin = std::min(theta_lin, u[k] / dist);
    ++scan.samples;
  }

  // Non-degeneracy over boundary vertices and radii in [r_min, r_scan].
  const double r_min = std::max(2.0 * h, opts.r_min < 0.0 ? 4.0 * h : opts.r_min);
  double r_scan = opts.r_scan;
  if (r_scan < 0.0) r_scan = 0.25 * diameter_positivity(u, tau);
  r_scan = std::max(r_scan, r_min);
  for (int q = 0; q < opts.radius_count; ++q) {
    const double t = opts.radius_count == 1 ? 0.0 : static_cast<double>(q) / (opts.radius_count - 1);
    scan.radii.push_back(r_min + t * (r_scan - r_min));
  }
  std::vector<Point> centers;
  for (const Polyline& pl : boundary.polylines) centers.insert(centers.end(), pl.points.begin(), pl.points.end());
  const std::size_t cstride =
      std::max<std::size_t>(1, (centers.size() + static_cast<std::size_t>(opts.max_centers) - 1) /
                                   static_cast<std::size_t>(opts.max_centers));
  double theta_sup = std::numeric_limits<double>::infinity();
  for (double r : scan.radii) {
    double by_r = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); c += cstride) {
      const Point x0 = centers[c];
      const Point o = g.origin();
      const int i0 = std::max(0, static_cast<int>(std::floor((x0.x - r - o.x) / h)));
      const int i1 = std::min(g.nx() - 1, static_cast<int>(std::ceil((x0.x + r - o.x) / h)));
      const int j0 = std::max(0, static_cast<int>(std::floor((x0.y - r - o.y) / h)));
      const int j1 = std::min(g.ny() - 1, static_cast<int>(std::ceil((x0.y + r - o.y) / h)));
      double sup = -std::numeric_limits<double>::infinity();
      bool touches_contact = false;
      for (int j = j0; j <= j1 && !touches_contact; ++j)
        for (int i = i0; i <= i1; ++i) {
          if (distance(g.node(i, j), x0) > r) continue;
          const std::size_t k = g.index(i, j);
          if (contact[k]) {
            touches_contact = true;
            break;
          }
          sup = std::max(sup, u[k]);
        }
      if (touches_contact || !std::isfinite(sup)) continue;
      by_r = std::min(by_r, sup / r);
      ++scan.sup_samples;
    }
    scan.theta_sup_by_radius.push_back(by_r);
    theta_sup = std::min(theta_sup, by_r);
  }

  if (scan.samples < 100 || scan.sup_samples < 100) {
    std::ostringstream msg;
    msg << "scan underpowered: " << scan.samples << " growth samples and " << scan.sup_samples
        << " ball samples (need 100 each)";
    fail(ErrorKind::Underpowered, msg.str());
  }
  scan.theta_linear = theta_lin;
  scan.theta_sup = theta_sup;
  return scan;
}

void write_contour_csv(std::ostream& os, const ContourSet& c) {
  os << "poly_id,x,y\n";
  os.precision(17);
  for (std::size_t id = 0; id < c.polylines.size(); ++id) {
    const Polyline& pl = c.polylines[id];
    for (Point p : pl.points) os << id << ',' << p.x << ',' << p.y << '\n';
    if (pl.closed && !pl.points.empty()) os << id << ',' << pl.points.front().x << ',' << pl.points.front().y << '\n';
  }
}

void save_contour_csv(const std::string& path, const ContourSet& c) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path);
  write_contour_csv(os, c);
  require(static_cast<bool>(os), ErrorKind::Io, "failed writing " + path);
}

ContourSet read_contour_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == "poly_id,x,y", ErrorKind::Io,
          "contour CSV must start with header poly_id,x,y");
  std::map<long, Polyline> polys;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    long id = 0;
    double x = 0.0, y = 0.0;
    char c1 = 0, c2 = 0;
    require(static_cast<bool>(ls >> id >> c1 >> x >> c2 >> y) && c1 == ',' && c2 == ',', ErrorKind::Io,
            "malformed contour CSV line: " + line);
    polys[id].points.push_back({x, y});
  }
  ContourSet out;
  for (auto& [id, pl] : polys) {
    if (pl.points.size() > 3 && pl.points.front() == pl.points.back()) {
      pl.points.pop_back();
      pl.closed = true;
    }
    out.polylines.push_back(std::move(pl));
  }
  return out;
}

void write_scan_csv(std::ostream& os, const GrowthScan& scan, std::span<const DensityRow> density) {
  os << "quantity,r,value\n";
  os.precision(17);
  os << "theta_linear,," << scan.theta_linear << '\n';
  os << "theta_sup,," << scan.theta_sup << '\n';
  os << "samples,," << scan.samples << '\n';
  os << "sup_samples,," << scan.sup_samples << '\n';
  for (std::size_t k = 0; k < scan.radii.size(); ++k)
    os << "theta_sup_r," << scan.radii[k] << ',' << scan.theta_sup_by_radius[k] << '\n';
  for (const DensityRow& d : density) {
    os << "density_min," << d.r << ',' << d.min_ratio << '\n';
    os << "density_max," << d.r << ',' << d.max_ratio << '\n';
  }
}

}  // namespace fbopt
