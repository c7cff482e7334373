#include "fbopt/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fbopt/energy.hpp"
#include "fbopt/error.hpp"
#include "fbopt/freeboundary.hpp"

namespace fbopt {
namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& text, const std::string& key) {
  const std::string s = trim(text);
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    fail(ErrorKind::Config, key + ": not a number: '" + text + "'");
  return v;
}

// "a" or "a/b"
double parse_number(const std::string& text, const std::string& key) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) return to_double(text, key);
  const double den = to_double(text.substr(slash + 1), key);
  require(den != 0.0, ErrorKind::Config, key + ": division by zero");
  return to_double(text.substr(0, slash), key) / den;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

// Short form for file names: 4, 8, 16, 4.5.
std::string p_tag(double p) {
  std::ostringstream os;
  os << p;
  return os.str();
}

class Section {
 public:
  Section(const pt::ptree& root, const std::string& name, std::set<std::string> allowed) : name_(name) {
    if (auto child = root.get_child_optional(name)) tree_ = &*child;
    if (!tree_) return;
    for (const auto& [key, node] : *tree_) {
      require(node.empty(), ErrorKind::Config, "[" + name + "] " + key + ": nested keys are not allowed");
      require(allowed.count(key) > 0, ErrorKind::Config, "unknown key [" + name + "] " + key);
    }
  }

  bool has(const std::string& key) const { return tree_ && tree_->get_child_optional(key); }

  std::string str(const std::string& key, const std::string& def) const {
    return has(key) ? trim(tree_->get<std::string>(key)) : def;
  }

  double num(const std::string& key, double def) const {
    return has(key) ? parse_number(str(key, ""), label(key)) : def;
  }

  int integer(const std::string& key, int def) const {
    if (!has(key)) return def;
    const double v = num(key, 0.0);
    require(v == std::floor(v) && std::abs(v) < 1e9, ErrorKind::Config, label(key) + ": expected an integer");
    return static_cast<int>(v);
  }

  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const std::string v = str(key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(ErrorKind::Config, label(key) + ": expected a boolean, got '" + v + "'");
  }

  // Comma-separated numbers; a trailing "h" multiplies by `h` when h > 0.
  std::vector<double> list(const std::string& key, const std::vector<double>& def, double h = 0.0) const {
    if (!has(key)) return def;
    std::vector<double> out;
    for (std::string item : split(str(key, ""), ',')) {
      double scale = 1.0;
      if (h > 0.0 && !item.empty() && item.back() == 'h') {
        item = trim(item.substr(0, item.size() - 1));
        scale = h;
        if (item.empty()) item = "1";
      }
      out.push_back(scale * parse_number(item, label(key)));
    }
    require(!out.empty(), ErrorKind::Config, label(key) + ": empty list");
    return out;
  }

  // "auto" gives -1.
  double auto_num(const std::string& key) const {
    const std::string v = str(key, "auto");
    if (v == "auto") return -1.0;
    const double x = parse_number(v, label(key));
    require(x >= 0.0, ErrorKind::Config, label(key) + ": must be nonnegative or auto");
    return x;
  }

 private:
  std::string label(const std::string& key) const { return "[" + name_ + "] " + key; }

  const pt::ptree* tree_ = nullptr;
  std::string name_;
};

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative()) path = fs::path(base_dir) / path;
  return fs::weakly_canonical(path).string();
}

void check_config(const ExperimentConfig& cfg) {
  require(cfg.h > 0.0, ErrorKind::Config, "[grid] h must be positive");
  require(cfg.bbox.xmax - cfg.bbox.xmin >= 2.0 * cfg.h && cfg.bbox.ymax - cfg.bbox.ymin >= 2.0 * cfg.h,
          ErrorKind::Config, "[grid] bbox must span at least two cells per axis");
  require(cfg.shape == "disk" || cfg.shape == "mask", ErrorKind::Config, "[domain] shape must be disk or mask");
  require(cfg.obstacle == "plateau" || cfg.obstacle == "file" || cfg.obstacle == "zero", ErrorKind::Config,
          "[domain] obstacle must be plateau, file or zero");
  if (cfg.shape == "disk") require(cfg.omega_radius > 0.0, ErrorKind::Config, "[domain] omega_radius must be positive");
  if (cfg.shape == "mask") {
    require(!cfg.mask_file.empty(), ErrorKind::Config, "[domain] mask_file is required for shape = mask");
    require(fs::is_regular_file(cfg.mask_file), ErrorKind::Config, "[domain] mask_file not found: " + cfg.mask_file);
  }
  if (cfg.obstacle == "plateau") {
    require(cfg.shape == "disk", ErrorKind::Config, "[domain] obstacle = plateau needs shape = disk");
    require(cfg.r0 > 0.0 && cfg.w > 0.0 && cfg.M > 0.0, ErrorKind::Config, "[domain] r0, w and M must be positive");
  }
  if (cfg.obstacle == "file") {
    require(!cfg.phi_file.empty(), ErrorKind::Config, "[domain] phi_file is required for obstacle = file");
    require(fs::is_regular_file(cfg.phi_file), ErrorKind::Config, "[domain] phi_file not found: " + cfg.phi_file);
  }
  require(cfg.gamma > 0.0, ErrorKind::Config, "[domain] gamma must be positive");
  require(cfg.eps > 0.0, ErrorKind::Config, "[schedule] eps must be positive");
  require(cfg.eps_target_tol > 0.0, ErrorKind::Config, "[schedule] eps_target_tol must be positive");
  require(cfg.eps_min > 0.0, ErrorKind::Config, "[schedule] eps_min must be positive");
  require(cfg.band_cells >= 0.0 && cfg.tol_factor > 0.0, ErrorKind::Config, "[verify] band_cells/tol_factor out of range");
  require(cfg.c_n >= 0.0, ErrorKind::Config, "[verify] c_n must be nonnegative");
  cfg.schedule().validate();
  try {
    cfg.solver.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("[solver] ") + e.what());
  }
}

// ---- checkpoints

struct StageMeta {
  int index = 0;
  std::string phase;  // continuation | eps | p
  PenaltyParams params;
  SolveReport report;
  std::string hash;
};

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string stage_stem(int index) {
  std::ostringstream os;
  os << "stage_" << std::setw(3) << std::setfill('0') << index;
  return os.str();
}

fs::path checkpoint_dir(const fs::path& dir) { return dir / "checkpoints"; }

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + tmp.string());
    os << text;
    os.flush();
    require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_field_atomic(const fs::path& path, const ScalarField& f) {
  std::ostringstream os;
  write_field(os, f);
  write_text_atomic(path, os.str());
}

std::string meta_text(const StageMeta& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  const SolveReport& r = m.report;
  os << "config_hash=" << m.hash << "\nindex=" << m.index << "\nphase=" << m.phase << "\nsigma=" << m.params.sigma
     << "\ndelta=" << m.params.delta << "\neps=" << m.params.eps << "\np=" << m.params.p << "\ngamma=" << m.params.gamma
     << "\niters=" << r.iters << "\nconverged=" << (r.converged ? 1 : 0) << "\ngrad_norm=" << r.grad_norm
     << "\nenergy_total=" << r.energy.total << "\nenergy_dirichlet=" << r.energy.dirichlet
     << "\nenergy_obstacle=" << r.energy.obstacle << "\nenergy_volume=" << r.energy.volume
     << "\nsmoothed_measure=" << r.energy.smoothed_measure << "\nvolume_outside=" << r.volume_outside
     << "\nlip_estimate=" << r.lip_estimate << "\nstop_reason=" << r.stop_reason << '\n';
  return os.str();
}

std::map<std::string, std::string> read_key_values(const fs::path& path, ErrorKind kind) {
  std::ifstream is(path);
  require(static_cast<bool>(is), kind, "cannot read " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, kind, "malformed line in " + path.string() + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

StageMeta read_meta(const fs::path& path) {
  const auto kv = read_key_values(path, ErrorKind::CorruptCheckpoint);
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail(ErrorKind::CorruptCheckpoint, path.string() + ": missing key " + key);
    return it->second;
  };
  auto num = [&](const char* key) {
    try {
      return to_double(get(key), key);
    } catch (const Error&) {
      fail(ErrorKind::CorruptCheckpoint, path.string() + ": bad value for " + key);
    }
  };
  StageMeta m;
  m.hash = get("config_hash");
  m.index = static_cast<int>(num("index"));
  m.phase = get("phase");
  require(m.phase == "continuation" || m.phase == "eps" || m.phase == "p", ErrorKind::CorruptCheckpoint,
          path.string() + ": unknown phase " + m.phase);
  m.params = {num("sigma"), num("delta"), num("eps"), num("p"), num("gamma")};
  SolveReport& r = m.report;
  r.iters = static_cast<int>(num("iters"));
  r.converged = num("converged") != 0.0;
  r.grad_norm = num("grad_norm");
  r.energy.total = num("energy_total");
  r.energy.dirichlet = num("energy_dirichlet");
  r.energy.obstacle = num("energy_obstacle");
  r.energy.volume = num("energy_volume");
  r.energy.smoothed_measure = num("smoothed_measure");
  r.volume_outside = num("volume_outside");
  r.lip_estimate = num("lip_estimate");
  r.stop_reason = get("stop_reason");
  return m;
}

ScalarField read_stage_field(const fs::path& dir, int index, const Grid& grid) {
  const fs::path path = checkpoint_dir(dir) / (stage_stem(index) + ".field");
  ScalarField f;
  try {
    f = load_field(path.string());
  } catch (const Error& e) {
    fail(ErrorKind::CorruptCheckpoint, path.string() + ": " + e.what());
  }
  require(f.grid() == grid, ErrorKind::CorruptCheckpoint, path.string() + ": grid differs from the config");
  require(f.all_finite(), ErrorKind::CorruptCheckpoint, path.string() + ": non-finite values");
  return f;
}

// Contiguous stage_000.. metas; stops at the first missing index.
std::vector<StageMeta> load_metas(const fs::path& dir, const std::string& hash) {
  std::vector<StageMeta> out;
  for (int k = 0;; ++k) {
    const fs::path path = checkpoint_dir(dir) / (stage_stem(k) + ".meta");
    if (!fs::exists(path)) break;
    StageMeta m = read_meta(path);
    require(m.index == k, ErrorKind::CorruptCheckpoint, path.string() + ": index mismatch");
    require(m.hash == hash, ErrorKind::CorruptCheckpoint,
            path.string() + ": config hash " + m.hash + " does not match " + hash);
    out.push_back(std::move(m));
  }
  return out;
}

// ---- schedule position

struct Step {
  std::string phase;
  PenaltyParams params;
};

// eps of the final p-sweep once the eps phase has settled.
std::optional<double> settled_eps(const ExperimentConfig& cfg, const std::vector<StageMeta>& done, std::size_t nc) {
  if (done.size() < nc) return std::nullopt;
  if (!cfg.eps_auto) return cfg.eps;
  const StageMeta* last = nullptr;
  for (const StageMeta& m : done) {
    if (m.phase == "p") return last->params.eps;
    last = &m;
  }
  if (std::abs(last->report.volume_outside - cfg.gamma) <= cfg.eps_target_tol * cfg.gamma) return last->params.eps;
  return std::nullopt;
}

std::optional<Step> next_step(const ExperimentConfig& cfg, const std::vector<StageMeta>& done) {
  const ContinuationSchedule sched = cfg.schedule();
  const std::size_t nc = sched.stage_count();
  const double p0 = sched.ps.front();
  if (done.size() < nc) {
    const auto [sigma, delta] = sched.stage(done.size());
    return Step{"continuation", {sigma, delta, cfg.eps, p0, cfg.gamma}};
  }
  const auto [sigma, delta] = sched.stage(nc - 1);
  const auto eps = settled_eps(cfg, done, nc);
  if (!eps) {
    const StageMeta& last = done.back();
    const double next = 0.5 * last.params.eps;
    if (next < cfg.eps_min) {
      std::ostringstream msg;
      msg << "volume not saturable at this resolution: achieved " << last.report.volume_outside << " for gamma = "
          << cfg.gamma << " down to eps = " << last.params.eps;
      fail(ErrorKind::NotSaturable, msg.str());
    }
    return Step{"eps", {sigma, delta, next, p0, cfg.gamma}};
  }
  std::size_t p_done = 0;
  for (const StageMeta& m : done) p_done += m.phase == "p";
  if (p_done >= sched.ps.size()) return std::nullopt;
  return Step{"p", {sigma, delta, *eps, sched.ps[p_done], cfg.gamma}};
}

// Stage index of the p-sweep entry for each p, in schedule order.
std::vector<int> p_stage_indices(const std::vector<StageMeta>& done) {
  std::vector<int> idx;
  for (const StageMeta& m : done)
    if (m.phase == "p") idx.push_back(m.index);
  return idx;
}

// ---- final artifacts

struct PerP {
  double p = 0.0;
  double lip_estimate = 0.0;
  double sup_diff_next = kNaN;
  double hausdorff_ext_next = kNaN;
  double hausdorff_int_next = kNaN;
  double theta_linear = kNaN;
  double theta_sup = kNaN;
  double volume_error = 0.0;
  double inf_residual_median = kNaN;
  bool bounds_pass = true;
  bool regions_pass = true;
};

struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = true;
  bool gating = true;
};

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

double insulation_inf_median(const ScalarField& u, const RegionLabels& labels) {
  const ScalarField r = inflap_residual_field(u);
  std::vector<double> vals;
  for (std::size_t k = 0; k < r.size(); ++k)
    if (labels.labels[k] == Region::Insulation) vals.push_back(std::abs(r[k]));
  return median(std::move(vals));
}

ContourSet circle_contour(Point c, double r, int n) {
  Polyline pl;
  pl.closed = true;
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n;
    pl.points.push_back({c.x + r * std::cos(t), c.y + r * std::sin(t)});
  }
  ContourSet cs;
  cs.polylines.push_back(std::move(pl));
  return cs;
}

double hausdorff_or_nan(const ContourSet& a, const ContourSet& b) {
  if (a.empty() || b.empty()) return kNaN;
  return hausdorff_distance(a, b);
}

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt(v);
}

void log_line(bool quiet, const std::string& s) {
  if (!quiet) std::cerr << s << std::endl;
}

bool finalize(const fs::path& dir, const ExperimentConfig& cfg, const std::vector<StageMeta>& done, bool copy_fields,
              bool quiet) {
  const DomainSpec domain = build_domain(cfg);
  const double h = cfg.h;
  const double tau = resolved_tau(cfg, domain);
  const ContinuationSchedule sched = cfg.schedule();
  const std::vector<int> p_idx = p_stage_indices(done);
  require(p_idx.size() == sched.ps.size(), ErrorKind::Io, "run directory is incomplete: p-sweep stages missing");
  const double eps_star = done[static_cast<std::size_t>(p_idx.front())].params.eps;

  for (const char* sub : {"fields", "contours", "reports", "tables"}) fs::create_directories(dir / sub);

  std::vector<Check> checks;
  auto add = [&](std::string name, double value, double limit, bool pass, bool gating = true) {
    checks.push_back({std::move(name), value, limit, pass, gating});
  };

  // Every stage: bounds and convergence.
  {
    std::ostringstream os;
    os << std::setprecision(17) << "index,phase,min_u,max_u_minus_max_phi,min_u_minus_phi\n";
    const double pmax = domain.phi.max();
    const double unit = pmax > 0.0 ? pmax : 1.0;
    double worst_lo = 0.0, worst_hi = -std::numeric_limits<double>::infinity(), worst_gap = 0.0;
    bool after_cont = false;
    for (const StageMeta& m : done) {
      const ScalarField u = read_stage_field(dir, m.index, domain.grid());
      double gap = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < u.size(); ++k) gap = std::min(gap, u[k] - domain.phi[k]);
      const double lo = u.min() / unit, hi = (u.max() - pmax) / unit;
      os << m.index << ',' << m.phase << ',' << lo << ',' << hi << ',' << gap / unit << '\n';
      if (m.report.converged) {
        worst_lo = std::min(worst_lo, lo);
        worst_hi = std::max(worst_hi, hi);
      }
      if (m.phase == "continuation" && m.index + 1 == static_cast<int>(sched.stage_count())) after_cont = true;
      if (after_cont) worst_gap = std::min(worst_gap, gap / unit);
    }
    write_text_atomic(dir / "tables" / "stage_bounds.csv", os.str());
    add("stages.min_u", worst_lo, -1e-8, worst_lo >= -1e-8);
    add("stages.max_u_minus_max_phi", worst_hi, 1e-8, worst_hi <= 1e-8);
    add("stages.min_u_minus_phi", worst_gap, -1e-6, worst_gap >= -1e-6);
    std::size_t warmup = 0, sweep = 0;
    for (const StageMeta& m : done) (m.phase == "p" ? sweep : warmup) += !m.report.converged;
    add("stages.unconverged_sweep", static_cast<double>(sweep), 0.0, sweep == 0);
    add("monitor.unconverged_warmup", static_cast<double>(warmup), 0.0, warmup == 0, false);
  }

  // Stage energies.
  {
    std::ostringstream os;
    os << std::setprecision(17)
       << "index,phase,sigma,delta,eps,p,iters,converged,grad_norm,energy_total,energy_dirichlet,energy_obstacle,"
          "energy_volume,smoothed_measure,volume_outside,lip_estimate\n";
    for (const StageMeta& m : done) {
      const SolveReport& r = m.report;
      os << m.index << ',' << m.phase << ',' << m.params.sigma << ',' << m.params.delta << ',' << m.params.eps << ','
         << m.params.p << ',' << r.iters << ',' << (r.converged ? 1 : 0) << ',' << r.grad_norm << ','
         << r.energy.total << ',' << r.energy.dirichlet << ',' << r.energy.obstacle << ',' << r.energy.volume << ','
         << r.energy.smoothed_measure << ',' << r.volume_outside << ',' << r.lip_estimate << '\n';
    }
    write_text_atomic(dir / "tables" / "stages.csv", os.str());
  }

  // Fields and contours per p.
  std::vector<ScalarField> fields;
  std::vector<ContourSet> ext, inner;
  std::vector<PerP> rows;
  const double contact_tol = default_contact_tol(domain);
  for (std::size_t i = 0; i < sched.ps.size(); ++i) {
    const double p = sched.ps[i];
    const fs::path fpath = dir / "fields" / ("u_p" + p_tag(p) + ".field");
    if (copy_fields) save_field_atomic(fpath, read_stage_field(dir, p_idx[i], domain.grid()));
    require(fs::is_regular_file(fpath), ErrorKind::Io, "missing artifact " + fpath.string());
    ScalarField u = load_field(fpath.string());
    require(u.grid() == domain.grid(), ErrorKind::Io, fpath.string() + ": grid differs from the config");
    ext.push_back(extract_contour(u, tau));
    inner.push_back(contact_tol > 0.0 ? interior_contact_boundary(u, domain, contact_tol) : ContourSet{});
    save_contour_csv((dir / "contours" / ("exterior_p" + p_tag(p) + ".csv")).string(), ext.back());
    save_contour_csv((dir / "contours" / ("interior_p" + p_tag(p) + ".csv")).string(), inner.back());
    fields.push_back(std::move(u));
  }

  for (std::size_t i = 0; i < sched.ps.size(); ++i) {
    const double p = sched.ps[i];
    const ScalarField& u = fields[i];
    const std::string tag = "p" + p_tag(p);
    PerP row;
    row.p = p;
    row.lip_estimate = discrete_gradient_field(u).max_magnitude();
    row.volume_error = (positive_volume_outside(u, domain, tau) - domain.gamma) / domain.gamma;
    if (i + 1 < sched.ps.size()) {
      double sup = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) sup = std::max(sup, std::abs(u[k] - fields[i + 1][k]));
      row.sup_diff_next = sup;
      row.hausdorff_ext_next = hausdorff_or_nan(ext[i], ext[i + 1]);
      row.hausdorff_int_next = hausdorff_or_nan(inner[i], inner[i + 1]);
    }

    GrowthOptions gopts;
    gopts.seed = cfg.seed;
    std::ostringstream scan_csv;
    try {
      const GrowthScan scan = growth_scan(u, tau, domain, gopts);
      row.theta_linear = scan.theta_linear;
      row.theta_sup = scan.theta_sup;
      const std::vector<DensityRow> dens = density_ratios(ext[i], scan.radii);
      write_scan_csv(scan_csv, scan, dens);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoBoundary && e.kind() != ErrorKind::Underpowered) throw;
      scan_csv << "quantity,r,value\nskipped,0,0\n";
    }
    write_text_atomic(dir / "reports" / ("growth_" + tag + ".csv"), scan_csv.str());

    BoundsOptions bopts;
    bopts.tau = tau;
    bopts.volume_rel_tol = cfg.eps_target_tol;
    bopts.require_saturation = cfg.eps_auto;
    bopts.eps = eps_star;
    bopts.c_n = cfg.c_n;
    const BoundsReport bounds = bounds_and_constraints_check(u, domain, bopts);
    row.bounds_pass = bounds.pass;
    {
      std::ostringstream os;
      os << std::setprecision(17);
      write_report(os, bounds);
      write_text_atomic(dir / "reports" / ("bounds_" + tag + ".txt"), os.str());
    }
    for (const CheckItem& c : bounds.items) add(tag + ".bounds." + c.name, c.value, c.limit, c.pass);

    LabelOptions lopts;
    lopts.tau = tau;
    lopts.band_cells = cfg.band_cells;
    const RegionLabels labels = label_regions(u, domain, lopts);
    const RegionSignReport regions = region_sign_check(u, domain, p, labels, tau, cfg.tol_factor);
    row.regions_pass = regions.pass;
    row.inf_residual_median = insulation_inf_median(u, labels);
    {
      std::ostringstream os;
      os << std::setprecision(17);
      write_report(os, regions);
      write_text_atomic(dir / "reports" / ("regions_" + tag + ".txt"), os.str());
    }
    double worst = 0.0;
    for (const RegionCheck& c : regions.regions) worst = std::max(worst, c.max_violation);
    add(tag + ".region_sign", worst, regions.tol, regions.pass);
    rows.push_back(row);
  }

  {
    std::ostringstream os;
    os << "p,lip_estimate,sup_diff_next,hausdorff_ext_next,hausdorff_int_next,theta_linear,theta_sup,volume_error,"
          "inf_residual_median,bounds_pass,regions_pass\n";
    for (const PerP& r : rows)
      os << csv_num(r.p) << ',' << csv_num(r.lip_estimate) << ',' << csv_num(r.sup_diff_next) << ','
         << csv_num(r.hausdorff_ext_next) << ',' << csv_num(r.hausdorff_int_next) << ',' << csv_num(r.theta_linear)
         << ',' << csv_num(r.theta_sup) << ',' << csv_num(r.volume_error) << ',' << csv_num(r.inf_residual_median)
         << ',' << (r.bounds_pass ? 1 : 0) << ',' << (r.regions_pass ? 1 : 0) << '\n';
    write_text_atomic(dir / "tables" / "per_p.csv", os.str());
  }

  // Monitors: Hausdorff trend and infinity-residual trend along the sweep.
  auto trend = [&](const char* name, auto value, std::size_t count) {
    double worst = 0.0;
    for (std::size_t i = 1; i < count; ++i) {
      const double a = value(i - 1), b = value(i);
      if (std::isnan(a) || std::isnan(b)) continue;
      worst = std::max(worst, b / std::max(a, 1e-300));
    }
    add(name, worst, 1.2, worst <= 1.2, false);
  };
  if (rows.size() >= 3) {
    trend("monitor.hausdorff_ext_ratio", [&](std::size_t i) { return rows[i].hausdorff_ext_next; }, rows.size() - 1);
    trend("monitor.hausdorff_int_ratio", [&](std::size_t i) { return rows[i].hausdorff_int_next; }, rows.size() - 1);
  }
  if (rows.size() >= 2) trend("monitor.inf_residual_ratio", [&](std::size_t i) { return rows[i].inf_residual_median; }, rows.size());

  // Radial oracle comparison.
  if (domain.meta) {
    const RadialOracle oracle = RadialOracle::make(*domain.meta, domain.gamma);
    const OracleFeasibility feas = check_oracle(oracle);
    const ContourSet& c = ext.back();
    double r_mean = kNaN, r_min = kNaN, r_max = kNaN, haus = kNaN;
    if (!c.empty()) {
      double sum = 0.0;
      std::size_t n = 0;
      r_min = std::numeric_limits<double>::infinity();
      r_max = 0.0;
      for (const Polyline& pl : c.polylines)
        for (const Point& q : pl.points) {
          const double r = distance(q, oracle.center);
          sum += r;
          r_min = std::min(r_min, r);
          r_max = std::max(r_max, r);
          ++n;
        }
      r_mean = sum / static_cast<double>(n);
      haus = hausdorff_distance(c, circle_contour(oracle.center, oracle.R_star, 4096));
    }
    const double lip = rows.back().lip_estimate;
    const double lip_rel = std::abs(lip - oracle.lip) / oracle.lip;
    double cone_median = kNaN;
    try {
      const ScalarField cone = radial_cone_field(oracle, domain.grid());
      LabelOptions lopts;
      lopts.tau = tau;
      lopts.band_cells = cfg.band_cells;
      cone_median = insulation_inf_median(cone, label_regions(cone, domain, lopts));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InvalidArgument) throw;
    }
    std::ostringstream os;
    os << std::setprecision(17);
    write_report(os, oracle, feas);
    os << "measured.radius_mean=" << r_mean << "\nmeasured.radius_min=" << r_min << "\nmeasured.radius_max=" << r_max
       << "\nmeasured.hausdorff_to_circle=" << haus << "\nmeasured.lip_estimate=" << lip
       << "\nmeasured.lip_rel_error=" << lip_rel << "\nmeasured.p=" << rows.back().p
       << "\ncone.inf_residual_median=" << cone_median << "\nh=" << h << '\n';
    write_text_atomic(dir / "reports" / "oracle.txt", os.str());

    const double dr = std::abs(r_mean - oracle.R_star);
    add("oracle.radius_error", dr, 2.0 * h, dr <= 2.0 * h);
    add("oracle.hausdorff", haus, 3.0 * h, haus <= 3.0 * h);
    add("oracle.lip_rel_error", lip_rel, 0.1, lip_rel <= 0.1);
    for (const PerP& r : rows) {
      const double th = std::min(r.theta_linear, r.theta_sup);
      add("p" + p_tag(r.p) + ".growth_theta", th, 0.5 * oracle.lip, th >= 0.5 * oracle.lip);
    }
    if (!rows.empty()) {
      const double last = rows.back().inf_residual_median;
      add("monitor.inf_residual_vs_cone", last, 10.0 * cone_median, last <= 10.0 * cone_median, false);
    }
  }

  bool pass = true;
  for (const Check& c : checks)
    if (c.gating) pass = pass && c.pass;

  std::ostringstream os;
  os << std::setprecision(17);
  os << "config_hash=" << hash_hex(config_hash(cfg)) << "\nstages=" << done.size() << "\neps_star=" << eps_star
     << "\ntau=" << tau << "\nh=" << h << "\ngamma=" << domain.gamma << '\n';
  for (const PerP& r : rows) {
    const std::string t = "p" + p_tag(r.p);
    os << t << ".lip_estimate=" << r.lip_estimate << '\n' << t << ".volume_error=" << r.volume_error << '\n';
  }
  for (const Check& c : checks)
    os << "check." << c.name << '=' << c.value << "\ncheck." << c.name << ".limit=" << c.limit << "\ncheck." << c.name
       << (c.gating ? ".pass=" : ".monitor_ok=") << (c.pass ? 1 : 0) << '\n';
  os << "verify_pass=" << (pass ? 1 : 0) << '\n';
  write_text_atomic(dir / "summary.txt", os.str());

  for (const Check& c : checks)
    if (!c.pass) log_line(quiet, std::string(c.gating ? "FAILED " : "monitor ") + c.name + " = " + fmt(c.value));
  log_line(quiet, std::string("verification ") + (pass ? "passed" : "FAILED"));
  return pass;
}

RunOutcome drive(const fs::path& dir, const ExperimentConfig& cfg, const RunOptions& opts) {
  const DomainSpec domain = build_domain(cfg);
  check_volume_feasible(domain);
  const std::string hash = hash_hex(config_hash(cfg));
  fs::create_directories(checkpoint_dir(dir));
  std::vector<StageMeta> done = load_metas(dir, hash);
  ScalarField u = done.empty() ? domain.phi : read_stage_field(dir, done.back().index, domain.grid());

  SolveOptions sopts = cfg.solver;
  sopts.volume_tau = resolved_tau(cfg, domain);

  RunOutcome out;
  const bool was_complete = !next_step(cfg, done);
  if (was_complete && fs::is_regular_file(dir / "summary.txt")) {
    const auto kv = read_key_values(dir / "summary.txt", ErrorKind::CorruptCheckpoint);
    const auto it = kv.find("verify_pass");
    require(it != kv.end(), ErrorKind::CorruptCheckpoint, "summary.txt lacks verify_pass");
    log_line(opts.quiet, "run already complete");
    return {true, it->second == "1", static_cast<int>(done.size())};
  }

  while (auto step = next_step(cfg, done)) {
    if (opts.stop_after_stage >= 0 && static_cast<int>(done.size()) >= opts.stop_after_stage) {
      out.stages_done = static_cast<int>(done.size());
      log_line(opts.quiet, "stopped after " + std::to_string(done.size()) + " stages");
      return out;
    }
    const int index = static_cast<int>(done.size());
    MinimizeResult r;
    try {
      r = minimize(u, domain, step->params, sopts);
    } catch (const Error& e) {
      fail(e.kind(), "stage " + std::to_string(index) + " (" + step->phase + "): " + e.what());
    }
    StageMeta m{index, step->phase, step->params, r.report, hash};
    save_field_atomic(checkpoint_dir(dir) / (stage_stem(index) + ".field"), r.u);
    write_text_atomic(checkpoint_dir(dir) / (stage_stem(index) + ".meta"), meta_text(m));
    std::ostringstream msg;
    msg << "stage " << index << " " << step->phase << " sigma=" << step->params.sigma << " delta=" << step->params.delta
        << " eps=" << step->params.eps << " p=" << step->params.p << " iters=" << r.report.iters
        << " converged=" << r.report.converged << " volume=" << r.report.volume_outside
        << " lip=" << r.report.lip_estimate << " (" << r.report.stop_reason << ")";
    log_line(opts.quiet, msg.str());
    done.push_back(std::move(m));
    u = std::move(r.u);
  }
  out.complete = true;
  out.stages_done = static_cast<int>(done.size());
  out.verify_pass = finalize(dir, cfg, done, true, opts.quiet);
  return out;
}

}  // namespace

ContinuationSchedule ExperimentConfig::schedule() const {
  ContinuationSchedule s;
  s.sigmas = sigmas;
  s.deltas = deltas.empty() ? std::vector<double>{h} : deltas;
  s.ps = ps;
  s.eps = eps;
  return s;
}

ExperimentConfig parse_config(std::istream& is, const std::string& base_dir) {
  pt::ptree root;
  try {
    pt::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::Config, std::string("config syntax: ") + e.what());
  }
  const std::set<std::string> sections{"grid", "domain", "schedule", "solver", "verify", "output"};
  for (const auto& [name, node] : root) {
    require(!node.empty() || node.data().empty(), ErrorKind::Config, "key outside any section: " + name);
    require(sections.count(name) > 0, ErrorKind::Config, "unknown section [" + name + "]");
  }

  ExperimentConfig cfg;
  const Section grid(root, "grid", {"bbox", "h"});
  const Section dom(root, "domain", {"shape", "center", "omega_radius", "mask_file", "obstacle", "r0", "M", "w",
                                     "phi_file", "gamma", "R_star"});
  const Section sch(root, "schedule", {"sigmas", "deltas", "ps", "eps", "eps_start", "eps_target_tol", "eps_min"});
  const Section sol(root, "solver", {"max_iters", "tol_grad", "tol_energy", "stall_window", "step0", "armijo_c",
                                     "backtrack", "lbfgs_memory", "precondition", "precond_floor", "newton",
                                     "cg_max_iters"});
  const Section ver(root, "verify", {"theta_ref", "tau", "c_n", "band_cells", "tol_factor", "seed"});
  const Section outp(root, "output", {"dir"});

  const std::vector<double> bb = grid.list("bbox", {cfg.bbox.xmin, cfg.bbox.ymin, cfg.bbox.xmax, cfg.bbox.ymax});
  require(bb.size() == 4, ErrorKind::Config, "[grid] bbox needs xmin, ymin, xmax, ymax");
  cfg.bbox = {bb[0], bb[1], bb[2], bb[3]};
  cfg.h = grid.num("h", cfg.h);
  require(cfg.h > 0.0, ErrorKind::Config, "[grid] h must be positive");

  cfg.shape = dom.str("shape", cfg.shape);
  const std::vector<double> c = dom.list("center", {0.0, 0.0});
  require(c.size() == 2, ErrorKind::Config, "[domain] center needs x, y");
  cfg.center = {c[0], c[1]};
  cfg.omega_radius = dom.num("omega_radius", cfg.omega_radius);
  cfg.mask_file = resolve_path(dom.str("mask_file", ""), base_dir);
  cfg.obstacle = dom.str("obstacle", cfg.obstacle);
  cfg.r0 = dom.num("r0", cfg.r0);
  cfg.M = dom.num("M", cfg.M);
  cfg.w = dom.num("w", cfg.w);
  cfg.phi_file = resolve_path(dom.str("phi_file", ""), base_dir);
  require(dom.has("gamma") != dom.has("R_star"), ErrorKind::Config, "[domain] give exactly one of gamma and R_star");
  if (dom.has("gamma")) {
    cfg.gamma = dom.num("gamma", 0.0);
  } else {
    require(cfg.shape == "disk", ErrorKind::Config, "[domain] R_star needs shape = disk");
    const double rs = dom.num("R_star", 0.0);
    require(rs > cfg.omega_radius, ErrorKind::Config, "[domain] R_star must exceed omega_radius");
    cfg.gamma = std::numbers::pi * (rs * rs - cfg.omega_radius * cfg.omega_radius);
  }

  cfg.sigmas = sch.list("sigmas", cfg.sigmas);
  cfg.deltas = sch.list("deltas", {cfg.h}, cfg.h);
  cfg.ps = sch.list("ps", cfg.ps);
  const std::string eps = sch.str("eps", "auto");
  cfg.eps_auto = eps == "auto";
  cfg.eps = cfg.eps_auto ? sch.num("eps_start", 0.1) : parse_number(eps, "[schedule] eps");
  if (!cfg.eps_auto) require(!sch.has("eps_start"), ErrorKind::Config, "[schedule] eps_start only applies to eps = auto");
  cfg.eps_target_tol = sch.num("eps_target_tol", cfg.eps_target_tol);
  cfg.eps_min = sch.num("eps_min", cfg.eps_min);

  SolveOptions& s = cfg.solver;
  s.max_iters = sol.integer("max_iters", s.max_iters);
  s.tol_grad = sol.num("tol_grad", s.tol_grad);
  s.tol_energy = sol.num("tol_energy", s.tol_energy);
  s.stall_window = sol.integer("stall_window", s.stall_window);
  s.step0 = sol.num("step0", s.step0);
  s.armijo_c = sol.num("armijo_c", s.armijo_c);
  s.backtrack = sol.num("backtrack", s.backtrack);
  s.lbfgs_memory = sol.integer("lbfgs_memory", s.lbfgs_memory);
  s.precondition = sol.flag("precondition", s.precondition);
  s.precond_floor = sol.num("precond_floor", s.precond_floor);
  s.newton = sol.flag("newton", s.newton);
  s.cg_max_iters = sol.integer("cg_max_iters", s.cg_max_iters);

  cfg.theta_ref = ver.auto_num("theta_ref");
  cfg.tau = ver.auto_num("tau");
  cfg.c_n = ver.num("c_n", cfg.c_n);
  cfg.band_cells = ver.num("band_cells", cfg.band_cells);
  cfg.tol_factor = ver.num("tol_factor", cfg.tol_factor);
  const int seed = ver.integer("seed", 0);
  require(seed >= 0, ErrorKind::Config, "[verify] seed must be nonnegative");
  cfg.seed = static_cast<unsigned>(seed);

  const std::string dir = outp.str("dir", cfg.output_dir);
  cfg.output_dir = fs::path(dir).is_relative() ? (fs::path(base_dir) / dir).lexically_normal().string() : dir;

  check_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Config, "cannot read config " + path);
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  return parse_config(is, base.string());
}

void write_canonical(std::ostream& os, const ExperimentConfig& cfg) {
  os << "[grid]\nbbox = " << fmt_list({cfg.bbox.xmin, cfg.bbox.ymin, cfg.bbox.xmax, cfg.bbox.ymax})
     << "\nh = " << fmt(cfg.h) << "\n\n[domain]\nshape = " << cfg.shape
     << "\ncenter = " << fmt_list({cfg.center.x, cfg.center.y}) << "\nomega_radius = " << fmt(cfg.omega_radius)
     << "\nmask_file = " << cfg.mask_file << "\nobstacle = " << cfg.obstacle << "\nr0 = " << fmt(cfg.r0)
     << "\nM = " << fmt(cfg.M) << "\nw = " << fmt(cfg.w) << "\nphi_file = " << cfg.phi_file
     << "\ngamma = " << fmt(cfg.gamma) << "\n\n[schedule]\nsigmas = " << fmt_list(cfg.sigmas)
     << "\ndeltas = " << fmt_list(cfg.schedule().deltas) << "\nps = " << fmt_list(cfg.ps) << '\n';
  if (cfg.eps_auto)
    os << "eps = auto\neps_start = " << fmt(cfg.eps) << '\n';
  else
    os << "eps = " << fmt(cfg.eps) << '\n';
  const SolveOptions& s = cfg.solver;
  os << "eps_target_tol = " << fmt(cfg.eps_target_tol) << "\neps_min = " << fmt(cfg.eps_min)
     << "\n\n[solver]\nmax_iters = " << s.max_iters << "\ntol_grad = " << fmt(s.tol_grad)
     << "\ntol_energy = " << fmt(s.tol_energy) << "\nstall_window = " << s.stall_window << "\nstep0 = " << fmt(s.step0)
     << "\narmijo_c = " << fmt(s.armijo_c) << "\nbacktrack = " << fmt(s.backtrack)
     << "\nlbfgs_memory = " << s.lbfgs_memory << "\nprecondition = " << (s.precondition ? "true" : "false")
     << "\nprecond_floor = " << fmt(s.precond_floor) << "\nnewton = " << (s.newton ? "true" : "false")
     << "\ncg_max_iters = " << s.cg_max_iters << "\n\n[verify]\ntheta_ref = "
     << (cfg.theta_ref < 0.0 ? "auto" : fmt(cfg.theta_ref)) << "\ntau = " << (cfg.tau < 0.0 ? "auto" : fmt(cfg.tau))
     << "\nc_n = " << fmt(cfg.c_n) << "\nband_cells = " << fmt(cfg.band_cells) << "\ntol_factor = " << fmt(cfg.tol_factor)
     << "\nseed = " << cfg.seed << '\n';
}

std::string canonical_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  write_canonical(os, cfg);
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : canonical_text(cfg)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

DomainSpec build_domain(const ExperimentConfig& cfg) {
  const Grid grid = build_grid(cfg.bbox, cfg.h);
  if (cfg.shape == "disk" && cfg.obstacle == "plateau")
    return make_radial_domain(grid, {cfg.center, cfg.omega_radius, cfg.r0, cfg.M, cfg.w}, cfg.gamma);
  auto load_on_grid = [&](const std::string& path, const char* what) {
    ScalarField f;
    try {
      f = load_field(path);
    } catch (const Error& e) {
      fail(ErrorKind::Config, std::string(what) + ": " + e.what());
    }
    require(f.grid() == grid, ErrorKind::Config, std::string(what) + " grid differs from [grid]");
    return f;
  };
  DomainSpec d;
  d.omega_mask = cfg.shape == "disk" ? rasterize_disk(cfg.center, cfg.omega_radius, grid)
                                     : load_on_grid(cfg.mask_file, "mask_file");
  d.phi = cfg.obstacle == "file" ? load_on_grid(cfg.phi_file, "phi_file") : ScalarField(grid, 0.0);
  d.gamma = cfg.gamma;
  validate_domain(d);
  return d;
}

double resolved_tau(const ExperimentConfig& cfg, const DomainSpec& domain) {
  if (cfg.tau >= 0.0) return cfg.tau;
  const double theta = cfg.theta_ref >= 0.0 ? cfg.theta_ref : default_theta_ref(domain);
  return 0.5 * theta * cfg.h;
}

RunOutcome run_experiment(const std::string& config_path, const RunOptions& opts) {
  const ExperimentConfig cfg = load_config(config_path);
  const fs::path dir = opts.output_dir.empty() ? fs::path(cfg.output_dir) : fs::path(opts.output_dir);
  fs::create_directories(dir);
  const std::string text = canonical_text(cfg);
  const fs::path cfg_copy = dir / "config.ini";
  // A directory holding another experiment's checkpoints is refused.
  if (fs::exists(checkpoint_dir(dir) / (stage_stem(0) + ".meta")))
    load_metas(dir, hash_hex(config_hash(cfg)));
  write_text_atomic(cfg_copy, text + "\n[output]\ndir = " + fs::absolute(dir).string() + "\n");
  return drive(dir, cfg, opts);
}

RunOutcome resume_experiment(const std::string& dir, const RunOptions& opts) {
  const fs::path cfg_path = fs::path(dir) / "config.ini";
  require(fs::is_regular_file(cfg_path), ErrorKind::CorruptCheckpoint, "no config.ini in " + dir);
  ExperimentConfig cfg;
  try {
    cfg = load_config(cfg_path.string());
  } catch (const Error& e) {
    fail(ErrorKind::CorruptCheckpoint, std::string("config.ini: ") + e.what());
  }
  return drive(dir, cfg, opts);
}

bool write_run_report(const std::string& dir, bool quiet) {
  const fs::path cfg_path = fs::path(dir) / "config.ini";
  require(fs::is_regular_file(cfg_path), ErrorKind::Io, "missing artifact " + cfg_path.string());
  const ExperimentConfig cfg = load_config(cfg_path.string());
  const std::vector<StageMeta> done = load_metas(dir, hash_hex(config_hash(cfg)));
  require(!next_step(cfg, done), ErrorKind::Io, "run in " + dir + " is not complete");
  return finalize(dir, cfg, done, false, quiet);
}

void write_oracle(const RadialMeta& meta, double gamma, const Rect& bbox, double h, const std::string& dir) {
  const RadialOracle oracle = RadialOracle::make(meta, gamma);
  oracle.validate();
  const Grid grid = build_grid(bbox, h);
  const ScalarField cone = radial_cone_field(oracle, grid);
  fs::create_directories(dir);
  save_field_atomic(fs::path(dir) / "cone.field", cone);
  std::ostringstream os;
  os << std::setprecision(17);
  write_report(os, oracle, check_oracle(oracle));
  os << "cone.lip_estimate=" << discrete_gradient_field(cone).max_magnitude() << "\nh=" << h << '\n';
  write_text_atomic(fs::path(dir) / "oracle.txt", os.str());
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::Config:
    case ErrorKind::GridMismatch:
    case ErrorKind::Io:
    case ErrorKind::CorruptCheckpoint:
      return 2;
    default:
      return 3;
  }
}

}  // namespace fbopt
