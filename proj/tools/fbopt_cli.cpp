#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbopt/fbopt.h"

namespace {

int report_status(fbopt_status s, const char* verb) {
  if (s != FBOPT_OK) std::fprintf(stderr, "fbopt %s: %s\n", verb, fbopt_last_error());
  return fbopt_exit_code(s);
}

void print_result(const fbopt_run_result& r, bool quiet) {
  if (quiet) return;
  if (r.complete)
    std::printf("complete: %d stages, verification %s\n", r.stages_done, r.verify_pass ? "passed" : "failed");
  else
    std::printf("stopped after %d stages\n", r.stages_done);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized p-Laplacian obstacle / insulation solver"};
  app.require_subcommand(1);
  int threads = 1;
  bool quiet = false;
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "no progress output");

  std::string config, out_dir, dir;
  int stop_after = -1;

  CLI::App* run = app.add_subcommand("run", "solve all stages of an experiment config");
  run->add_option("config", config, "config file")->required();
  run->add_option("--output", out_dir, "output directory (overrides the config)");
  run->add_option("--stop-after-stage", stop_after, "checkpoint this many stages, then stop");

  CLI::App* resume = app.add_subcommand("resume", "continue a run from its checkpoints");
  resume->add_option("dir", dir, "run directory")->required();
  resume->add_option("--stop-after-stage", stop_after, "stop once this many stages are checkpointed");

  CLI::App* report = app.add_subcommand("report", "rebuild tables and summary of a completed run");
  report->add_option("dir", dir, "run directory")->required();

  CLI::App* oracle = app.add_subcommand("oracle", "write the radial cone oracle and its constants");
  std::vector<double> bbox{-2.0, -2.0, 2.0, 2.0};
  std::vector<double> center{0.0, 0.0};
  double h = 1.0 / 64.0, omega_radius = 0.4, r0 = 0.1, M = 0.6, w = 0.1, gamma = -1.0, r_star = 0.7;
  oracle->add_option("--bbox", bbox, "xmin ymin xmax ymax")->expected(4)->capture_default_str();
  oracle->add_option("--spacing", h, "grid spacing h")->capture_default_str();
  oracle->add_option("--center", center, "room center")->expected(2)->capture_default_str();
  oracle->add_option("--omega-radius", omega_radius)->capture_default_str();
  oracle->add_option("--r0", r0, "plateau radius")->capture_default_str();
  oracle->add_option("--M", M, "plateau height")->capture_default_str();
  oracle->add_option("--w", w, "smoothstep width")->capture_default_str();
  auto* g_opt = oracle->add_option("--gamma", gamma, "insulation budget");
  oracle->add_option("--R-star", r_star, "outer radius, sets gamma")->excludes(g_opt)->capture_default_str();
  oracle->add_option("--output", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return e.get_exit_code() == 0 ? 0 : (code == 0 ? 0 : 2);
  }

  if (fbopt_set_threads(threads) != FBOPT_OK) return report_status(FBOPT_ERR_INVALID_ARGUMENT, "threads");

  if (*run) {
    fbopt_run_result r{};
    const fbopt_status s = fbopt_run(config.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(), stop_after, quiet, &r);
    if (s == FBOPT_OK || s == FBOPT_ERR_VERIFICATION) print_result(r, quiet);
    return report_status(s, "run");
  }
  if (*resume) {
    fbopt_run_result r{};
    const fbopt_status s = fbopt_resume(dir.c_str(), stop_after, quiet, &r);
    if (s == FBOPT_OK || s == FBOPT_ERR_VERIFICATION) print_result(r, quiet);
    return report_status(s, "resume");
  }
  if (*report) {
    int pass = 0;
    return report_status(fbopt_report(dir.c_str(), quiet, &pass), "report");
  }
  if (gamma < 0.0) gamma = std::numbers::pi * (r_star * r_star - omega_radius * omega_radius);
  const fbopt_status s = fbopt_oracle(bbox.data(), h, center[0], center[1], omega_radius, r0, M, w, gamma, out_dir.c_str());
  return report_status(s, "oracle");
}
