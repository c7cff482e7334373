#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fbopt/freeboundary.hpp"
#include "fbopt/geometry.hpp"

namespace fbopt {

/// Radial benchmark: disk room of radius R_omega, plateau obstacle (r0, w, M)
/// and budget gamma. The cone of slope lip from the plateau edge down to
/// R_star uses exactly gamma outside the room.
struct RadialOracle {
  Point center;
  double R_omega = 0.0;
  double r0 = 0.0;
  double w = 0.0;
  double M = 0.0;
  double gamma = 0.0;
  double R_star = 0.0;  // sqrt(R_omega^2 + gamma/pi)
  double lip = 0.0;     // M / (R_star - r0)

  static RadialOracle make(const RadialMeta& meta, double gamma);
  /// Throws InvalidArgument unless R_star > R_omega, lip > 0 and the annulus
  /// area matches gamma to 1e-12 relative.
  void validate() const;
};

/// M on |x| <= r0, linear down to 0 at R_star, 0 beyond. Throws
/// InvalidArgument when R_star + 2h leaves the grid.
ScalarField radial_cone_field(const RadialOracle& oracle, const Grid& grid);

struct OracleFeasibility {
  double max_violation = 0.0;  // max (phi - cone)+ over the grid
  double lip_lower = 0.0;      // max_r phi(r) / (R_star - r): no radial admissible u has smaller Lipschitz constant
};

/// Independent check of the cone against the plateau obstacle profile.
OracleFeasibility check_oracle(const RadialOracle& oracle, int samples = 20000);

/// A r^{(p-2)/(p-1)} + B, the radial p-harmonic profile in the plane.
double radial_p_harmonic(double A, double B, double p, double r);

/// Discrete Delta_p u: minus the Dirichlet first variation divided by h^2.
/// Nodes on the grid rim are 0.
ScalarField plap_residual_field(const ScalarField& u, double p);

/// grad u^T D^2 u grad u with central differences. Rim nodes and nodes with
/// |grad u| < 1e-8 max|grad u| are 0.
ScalarField inflap_residual_field(const ScalarField& u);

/// Central-difference Laplacian, rim nodes 0.
ScalarField laplacian_field(const ScalarField& u);

/// Central-difference |grad u|, rim nodes 0.
ScalarField gradient_magnitude_field(const ScalarField& u);

enum class Region : std::uint8_t { Contact, Heated, Insulation, Dead, Band };

const char* region_name(Region r);

struct RegionLabels {
  Grid grid;
  std::vector<Region> labels;

  std::size_t count(Region r) const;
};

struct LabelOptions {
  double tau = 0.0;           // positivity threshold outside the room
  double contact_tol = -1.0;  // negative: default_contact_tol(domain)
  double band_cells = 2.0;
};

/// Contact / heated inside the room, insulation / dead outside; nodes within
/// band_cells*h of the exterior isoline or the interior contact boundary are
/// Band.
RegionLabels label_regions(const ScalarField& u, const DomainSpec& domain, const LabelOptions& opts);

struct RegionCheck {
  Region region = Region::Band;
  std::size_t nodes = 0;
  double max_violation = 0.0;  // of "= 0" (heated, insulation), "<= 0" (contact) or ">= 0" (dead)
  bool pass = true;
};

struct RegionSignReport {
  double p = 0.0;
  double scale = 0.0;  // G^{p-1} / L, G = max cell |grad u|, L = half the positivity diameter
  double tol = 0.0;    // tol_factor * h * scale
  std::vector<RegionCheck> regions;
  bool pass = true;
};

RegionSignReport region_sign_check(const ScalarField& u, const DomainSpec& domain, double p,
                                   const RegionLabels& labels, double tau, double tol_factor = 10.0);

struct BoundsOptions {
  double tau = 0.0;
  double bound_tol = 1e-8;       // relative to max phi
  double obstacle_tol = 1e-6;    // relative to max phi
  double volume_rel_tol = 0.05;  // |volume - gamma| / gamma
  bool require_saturation = true;  // false: only volume <= (1 + volume_rel_tol) gamma
  double eps = 0.1;              // for the diameter bound
  double c_n = 0.0;
};

struct CheckItem {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = true;
};

struct BoundsReport {
  std::vector<CheckItem> items;
  bool pass = true;
};

/// min u, max u - max phi, min(u - phi), volume error and diameter against
/// its bound, each with pass/fail.
BoundsReport bounds_and_constraints_check(const ScalarField& u, const DomainSpec& domain, const BoundsOptions& opts);

void write_report(std::ostream& os, const RegionSignReport& r);
void write_report(std::ostream& os, const BoundsReport& r);
void write_report(std::ostream& os, const RadialOracle& o, const OracleFeasibility& f);

}  // namespace fbopt
