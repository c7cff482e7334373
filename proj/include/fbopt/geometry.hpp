#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbopt {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

inline double distance(Point a, Point b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct Rect {
  double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;
};

/// Uniform node lattice: node (i, j) sits at origin + (i*h, j*h).
class Grid {
 public:
  Grid() = default;
  Grid(int nx, int ny, double h, Point origin);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double h() const { return h_; }
  Point origin() const { return origin_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(i);
  }
  Point node(int i, int j) const { return {origin_.x + i * h_, origin_.y + j * h_}; }
  Rect extent() const { return {origin_.x, origin_.y, origin_.x + (nx_ - 1) * h_, origin_.y + (ny_ - 1) * h_}; }

  bool operator==(const Grid&) const = default;

 private:
  int nx_ = 0;
  int ny_ = 0;
  double h_ = 0.0;
  Point origin_{};
};

/// Nodal values on a Grid, row-major with rows of constant j.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Grid& grid, double fill = 0.0);
  ScalarField(const Grid& grid, std::vector<double> values);

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double min() const;
  double max() const;
  bool all_finite() const;

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// Analytic description of the radially symmetric benchmark.
struct RadialMeta {
  Point center;
  double omega_radius = 0.0;
  double r0 = 0.0;  // plateau radius
  double M = 0.0;   // plateau height
  double w = 0.0;   // smoothstep width
};

/// The room (mask), obstacle and insulation budget.
struct DomainSpec {
  ScalarField omega_mask;  // 1 inside the room, 0 outside
  ScalarField phi;
  double gamma = 0.0;
  std::optional<RadialMeta> meta;

  const Grid& grid() const { return omega_mask.grid(); }
  bool inside(std::size_t k) const { return omega_mask[k] > 0.5; }
};

struct PlateauSpec {
  double r0 = 0.0;
  double M = 0.0;
  double w = 0.0;
};

Grid build_grid(const Rect& bbox, double h);

ScalarField rasterize_disk(Point center, double radius, const Grid& grid);

/// Radial C1 bump: M on r <= r0, reversed cubic smoothstep on (r0, r0+w), 0 beyond.
ScalarField synth_plateau_bump(const PlateauSpec& spec, Point center, const Grid& grid, double omega_radius);

/// Profile of synth_plateau_bump as a function of radius.
double plateau_profile(const PlateauSpec& spec, double r);

/// h^2 * #{nodes outside the room with u > tau}.
double positive_volume_outside(const ScalarField& u, const DomainSpec& domain, double tau);

/// Largest distance between two nodes with u > tau.
double diameter_positivity(const ScalarField& u, double tau);

/// Checks the mask/obstacle/budget invariants; throws Config on violation.
void validate_domain(const DomainSpec& domain);

/// Builds the disk room with a plateau obstacle.
DomainSpec make_radial_domain(const Grid& grid, const RadialMeta& meta, double gamma);

/// Area of the grid cells available outside the room, h^2 * #{mask = 0}.
double outside_capacity(const DomainSpec& domain);

/// max|phi| + max|grad phi| with central differences.
double c1_norm(const ScalarField& f);

/// Upper bound on diam({u > 0}): diam(room) + 1 + c_n * gamma * (|phi|_C1 + 1/eps) / eps.
double positivity_diameter_bound(const DomainSpec& domain, double eps, double c_n);

/// True when the grid extent contains the room's bounding box padded by `pad`.
bool grid_covers_padded_room(const DomainSpec& domain, double pad);

/// Default threshold separating positive nodes from the zero set.
double default_theta_ref(const DomainSpec& domain);

// Text format: header "nx ny h ox oy", then ny lines of nx values.
void write_field(std::ostream& os, const ScalarField& f);
ScalarField read_field(std::istream& is);
void save_field(const std::string& path, const ScalarField& f);
ScalarField load_field(const std::string& path);

void require_same_grid(const ScalarField& a, const ScalarField& b, const char* what);

}  // namespace fbopt
