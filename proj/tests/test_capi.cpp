// Links only the shared library; everything goes through fbopt.h.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "fbopt/fbopt.h"

namespace fs = std::filesystem;

namespace {

const double kBox[4] = {-1.0, -1.0, 1.0, 1.0};
const double kGamma = std::numbers::pi * (0.49 - 0.16);

fs::path scratch(const char* name) {
  const fs::path d = fs::temp_directory_path() / (std::string("fbopt_capi_") + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("status plumbing") {
  CHECK(std::strlen(fbopt_version()) > 0);
  CHECK(fbopt_exit_code(FBOPT_OK) == 0);
  CHECK(fbopt_exit_code(FBOPT_ERR_VERIFICATION) == 1);
  CHECK(fbopt_exit_code(FBOPT_ERR_CONFIG) == 2);
  CHECK(fbopt_exit_code(FBOPT_ERR_CORRUPT_CHECKPOINT) == 2);
  CHECK(fbopt_exit_code(FBOPT_ERR_STEP_FAILURE) == 3);
  CHECK(fbopt_set_threads(0) == FBOPT_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(fbopt_last_error()) > 0);
  CHECK(fbopt_set_threads(2) == FBOPT_OK);
  CHECK(std::strlen(fbopt_last_error()) == 0);
  CHECK(fbopt_field_load(nullptr, nullptr) == FBOPT_ERR_INVALID_ARGUMENT);
}

TEST_CASE("field handles") {
  fbopt_field* f = nullptr;
  REQUIRE(fbopt_field_create(4, 3, 0.5, -1.0, 0.0, &f) == FBOPT_OK);
  int nx = 0, ny = 0;
  double h = 0, ox = 0, oy = 0;
  CHECK(fbopt_field_shape(f, &nx, &ny, &h, &ox, &oy) == FBOPT_OK);
  CHECK(nx == 4);
  CHECK(ny == 3);
  CHECK(h == 0.5);
  CHECK(ox == -1.0);
  std::vector<double> v(12);
  for (int k = 0; k < 12; ++k) v[k] = 0.25 * k - 1.0;
  CHECK(fbopt_field_set_values(f, v.data(), 11) == FBOPT_ERR_INVALID_ARGUMENT);
  REQUIRE(fbopt_field_set_values(f, v.data(), v.size()) == FBOPT_OK);

  const fs::path dir = scratch("field");
  const std::string path = (dir / "f.field").string();
  REQUIRE(fbopt_field_save(f, path.c_str()) == FBOPT_OK);
  fbopt_field* g = nullptr;
  REQUIRE(fbopt_field_load(path.c_str(), &g) == FBOPT_OK);
  std::vector<double> w(12);
  REQUIRE(fbopt_field_get_values(g, w.data(), w.size()) == FBOPT_OK);
  CHECK(w == v);
  fbopt_field_free(f);
  fbopt_field_free(g);

  fbopt_field* bad = nullptr;
  CHECK(fbopt_field_create(1, 5, 0.1, 0, 0, &bad) != FBOPT_OK);
  CHECK(bad == nullptr);
  std::ofstream((dir / "junk.field").string()) << "not a field";
  CHECK(fbopt_field_load((dir / "junk.field").string().c_str(), &bad) != FBOPT_OK);
  CHECK(fbopt_field_load((dir / "none.field").string().c_str(), &bad) != FBOPT_OK);
}

TEST_CASE("domain, energy and minimize") {
  fbopt_domain* d = nullptr;
  REQUIRE(fbopt_domain_radial(kBox, 1.0 / 16, 0, 0, 0.4, 0.1, 0.6, 0.1, kGamma, &d) == FBOPT_OK);
  fbopt_field* phi = nullptr;
  REQUIRE(fbopt_domain_phi(d, &phi) == FBOPT_OK);
  int nx = 0;
  fbopt_field_shape(phi, &nx, nullptr, nullptr, nullptr, nullptr);
  CHECK(nx == 33);

  const fbopt_penalty pen{1e-2, 1.0 / 16, 0.1, 4.0};
  fbopt_energy e0{};
  REQUIRE(fbopt_energy_eval(d, phi, &pen, &e0) == FBOPT_OK);
  CHECK(std::abs(e0.total - (e0.dirichlet + e0.obstacle + e0.volume)) <= 1e-12 * std::abs(e0.total) + 1e-15);

  fbopt_field* u = nullptr;
  fbopt_solve_report rep{};
  REQUIRE(fbopt_minimize(d, phi, &pen, 0, 0.0, &u, &rep) == FBOPT_OK);
  CHECK(rep.converged == 1);
  CHECK(rep.energy.total <= e0.total);
  fbopt_energy e1{};
  REQUIRE(fbopt_energy_eval(d, u, &pen, &e1) == FBOPT_OK);
  CHECK(e1.total == doctest::Approx(rep.energy.total).epsilon(1e-12));

  fbopt_penalty neg = pen;
  neg.sigma = -1.0;
  CHECK(fbopt_energy_eval(d, u, &neg, &e1) == FBOPT_ERR_INVALID_ARGUMENT);

  // a field on another grid
  fbopt_field* other = nullptr;
  REQUIRE(fbopt_field_create(5, 5, 0.5, -1, -1, &other) == FBOPT_OK);
  CHECK(fbopt_energy_eval(d, other, &pen, &e1) == FBOPT_ERR_GRID_MISMATCH);

  fbopt_domain* d2 = nullptr;
  CHECK(fbopt_domain_from_fields(other, phi, 1.0, &d2) == FBOPT_ERR_GRID_MISMATCH);
  CHECK(d2 == nullptr);
  CHECK(fbopt_domain_radial(kBox, 1.0 / 16, 0, 0, 0.4, 0.1, 0.6, 0.1, -1.0, &d2) != FBOPT_OK);

  fbopt_field_free(other);
  fbopt_field_free(u);
  fbopt_field_free(phi);
  fbopt_domain_free(d);
}

TEST_CASE("pipeline entry points") {
  const fs::path dir = scratch("run");
  const fs::path cfg = dir / "zero.ini";
  std::ofstream(cfg) << "[grid]\nbbox = -1, -1, 1, 1\nh = 1/16\n[domain]\nomega_radius = 0.4\nobstacle = zero\n"
                        "gamma = 0.5\n[schedule]\nsigmas = 1e-2\ndeltas = 1h\nps = 4\neps = 0.1\n";
  fbopt_run_result r{};
  const std::string out = (dir / "out").string();
  REQUIRE(fbopt_run(cfg.string().c_str(), out.c_str(), -1, 1, &r) == FBOPT_OK);
  CHECK(r.complete == 1);
  CHECK(r.verify_pass == 1);
  int pass = 0;
  CHECK(fbopt_report(out.c_str(), 1, &pass) == FBOPT_OK);
  CHECK(pass == 1);
  CHECK(fbopt_resume(out.c_str(), -1, 1, &r) == FBOPT_OK);

  CHECK(fbopt_run((dir / "none.ini").string().c_str(), nullptr, -1, 1, &r) == FBOPT_ERR_CONFIG);
  CHECK(fbopt_resume((dir / "nothing").string().c_str(), -1, 1, &r) == FBOPT_ERR_CORRUPT_CHECKPOINT);
  CHECK(fbopt_report((dir / "nothing").string().c_str(), 1, &pass) == FBOPT_ERR_IO);

  const std::string odir = (dir / "oracle").string();
  CHECK(fbopt_oracle(kBox, 1.0 / 32, 0, 0, 0.4, 0.1, 0.6, 0.1, kGamma, odir.c_str()) == FBOPT_OK);
  CHECK(fs::is_regular_file(dir / "oracle" / "cone.field"));
}
