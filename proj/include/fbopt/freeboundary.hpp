#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fbopt/geometry.hpp"

namespace fbopt {

struct Polyline {
  std::vector<Point> points;
  bool closed = false;  // the last vertex connects back to the first
};

struct ContourSet {
  std::vector<Polyline> polylines;

  bool empty() const { return polylines.empty(); }
  std::size_t vertex_count() const;
  double length() const;
};

/// Marching-squares isoline u = tau with linear interpolation along cell
/// edges. Saddle cells connect the corners on the side of the cell average.
ContourSet extract_contour(const ScalarField& u, double tau);

/// Same, restricted to cells whose four corners have a nonzero `cell_mask`.
ContourSet extract_contour(const ScalarField& u, double tau, const ScalarField& cell_mask);

/// 1e-3 max(phi), the default contact tolerance.
double default_contact_tol(const DomainSpec& domain);

/// Isoline u - phi = tol over cells lying fully inside the room.
ContourSet interior_contact_boundary(const ScalarField& u, const DomainSpec& domain, double tol);

/// Largest distance from a vertex of `a` to the segments of `b`.
double directed_hausdorff(const ContourSet& a, const ContourSet& b);

/// max of both directed distances. Throws NoBoundary if either set is empty.
double hausdorff_distance(const ContourSet& a, const ContourSet& b);

/// Distance from p to the nearest segment (or isolated vertex) of c.
double distance_to_contour(Point p, const ContourSet& c);

struct DensityRow {
  double r = 0.0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};

/// For up to `max_centers` vertices x0 spread along the contour, the length
/// of the contour inside B_r(x0) divided by r; min and max per radius.
std::vector<DensityRow> density_ratios(const ContourSet& contour, std::span<const double> radii,
                                       std::size_t max_centers = 256);

struct GrowthOptions {
  double contact_tol = -1.0;  // negative: default_contact_tol(domain)
  double r_scan = -1.0;       // negative: a quarter of the positivity diameter
  double r_min = -1.0;        // smallest ball radius; negative: 4h
  double band = 2.0;          // growth samples closer than band*h to the isoline are skipped
  int radius_count = 8;
  int max_samples = 20000;
  int max_centers = 200;
  unsigned seed = 0;          // offsets the strided sample grid
};

struct GrowthScan {
  double theta_linear = 0.0;  // min u(x) / dist(x, boundary)
  double theta_sup = 0.0;     // min sup_{B_r(x0)} u / r
  int samples = 0;            // interior samples behind theta_linear
  int sup_samples = 0;        // (x0, r) pairs behind theta_sup
  std::vector<double> radii;
  std::vector<double> theta_sup_by_radius;
};

/// Linear growth and non-degeneracy constants of u around the boundary of
/// {u > tau}, away from the contact set and above grid scale. Throws NoBoundary when the isoline
/// is empty and Underpowered with fewer than 100 samples.
GrowthScan growth_scan(const ScalarField& u, double tau, const DomainSpec& domain, const GrowthOptions& opts = {});

/// CSV with header "poly_id,x,y".
void write_contour_csv(std::ostream& os, const ContourSet& c);
void save_contour_csv(const std::string& path, const ContourSet& c);
ContourSet read_contour_csv(std::istream& is);

/// CSV with header "quantity,r,value".
void write_scan_csv(std::ostream& os, const GrowthScan& scan, std::span<const DensityRow> density);

}  // namespace fbopt
