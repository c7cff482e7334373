#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "fbopt/error.hpp"
#include "fbopt/pipeline.hpp"
#include "support.hpp"

using namespace fbopt;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"([grid]
bbox = -1, -1, 1, 1
h = 1/32

[domain]
shape = disk
omega_radius = 0.4
obstacle = plateau
r0 = 0.1
M = 0.6
w = 0.1
R_star = 0.7

[schedule]
sigmas = 1e-2, 1e-3, 1e-4
deltas = 1h, 0.3h, 0.1h
ps = 4, 8
eps = auto
)";

ExperimentConfig parse(const std::string& text, const std::string& base = "/tmp") {
  std::istringstream is(text);
  return parse_config(is, base);
}

ErrorKind kind_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("config accepted: " << text);
  return ErrorKind::InvalidArgument;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

RunOptions quiet(int stop = -1, const fs::path& dir = {}) {
  RunOptions o;
  o.quiet = true;
  o.stop_after_stage = stop;
  o.output_dir = dir.string();
  return o;
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse(kSmall);
  CHECK(c.h == 1.0 / 32);
  CHECK(c.bbox.xmax == 1.0);
  REQUIRE(c.deltas.size() == 3);
  CHECK(c.deltas[2] == doctest::Approx(0.1 / 32));
  CHECK(c.gamma == doctest::Approx(fbtest::benchmark_gamma()).epsilon(1e-14));
  CHECK(c.eps_auto);
  CHECK(c.eps == 0.1);
  CHECK(c.output_dir == "/tmp/out");
  CHECK(c.schedule().stage_count() == 3);

  std::string mixed = kSmall;
  mixed.replace(mixed.find("deltas = 1h, 0.3h, 0.1h"), 23, "deltas = 0.5h, 1/100");
  const ExperimentConfig m = parse(mixed);
  REQUIRE(m.deltas.size() == 2);
  CHECK(m.deltas[0] == doctest::Approx(1.0 / 64));
  CHECK(m.deltas[1] == doctest::Approx(0.01));

  CHECK(kind_of(std::string(kSmall) + "bogus = 1\n") == ErrorKind::Config);
  CHECK(kind_of(std::string(kSmall) + "[extra]\nx = 1\n") == ErrorKind::Config);
  std::string bad = kSmall;
  bad.replace(bad.find("h = 1/32"), 8, "h = 1/x");
  CHECK(kind_of(bad) == ErrorKind::Config);
  std::string both = kSmall;
  both.replace(both.find("R_star = 0.7"), 12, "R_star = 0.7\ngamma = 1");
  CHECK(kind_of(both) == ErrorKind::Config);
  std::string fixed_start = kSmall;
  fixed_start.replace(fixed_start.find("eps = auto"), 10, "eps = 0.1\neps_start = 0.2");
  CHECK(kind_of(fixed_start) == ErrorKind::Config);
  std::string masked = kSmall;
  masked.replace(masked.find("shape = disk"), 12, "shape = mask\nmask_file = nowhere.field");
  CHECK(kind_of(masked) == ErrorKind::Config);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), Error);
}

TEST_CASE("canonical text is a fixed point") {
  const ExperimentConfig c = parse(kSmall);
  const std::string t1 = canonical_text(c);
  const ExperimentConfig back = parse(t1);
  CHECK(canonical_text(back) == t1);
  CHECK(config_hash(back) == config_hash(c));

  // the output dir does not enter the hash, the schedule does
  const ExperimentConfig elsewhere = parse(std::string(kSmall) + "[output]\ndir = /somewhere\n");
  CHECK(config_hash(elsewhere) == config_hash(c));
  std::string other = kSmall;
  other.replace(other.find("ps = 4, 8"), 9, "ps = 4, 16");
  CHECK(config_hash(parse(other)) != config_hash(c));
}

TEST_CASE("zero obstacle run writes the artifacts") {
  const fs::path dir = fbtest::scratch_dir("zero");
  const fs::path cfg = write_file(dir / "zero.ini", R"([grid]
bbox = -1, -1, 1, 1
h = 1/16
[domain]
omega_radius = 0.4
obstacle = zero
gamma = 0.5
[schedule]
sigmas = 1e-2
deltas = 1h
ps = 4
eps = 0.1
)");
  const RunOutcome r = run_experiment(cfg.string(), quiet(-1, dir / "run"));
  CHECK(r.complete);
  CHECK(r.verify_pass);
  CHECK(r.stages_done == 2);  // one continuation stage, one p stage
  for (const char* f : {"config.ini", "summary.txt", "tables/per_p.csv", "tables/stages.csv", "fields/u_p4.field",
                        "contours/exterior_p4.csv", "reports/bounds_p4.txt", "reports/growth_p4.csv"})
    CHECK_MESSAGE(fs::is_regular_file(dir / "run" / f), f);
  const ScalarField u = load_field((dir / "run" / "fields" / "u_p4.field").string());
  CHECK(u.max() <= 1e-8);
  CHECK(count_lines(slurp(dir / "run" / "tables" / "per_p.csv")) == 2);
  CHECK(write_run_report((dir / "run").string()));
}

TEST_CASE("infeasible budget is a config error") {
  const fs::path dir = fbtest::scratch_dir("infeasible");
  std::string text = kSmall;
  text.replace(text.find("R_star = 0.7"), 12, "gamma = 100");
  const fs::path cfg = write_file(dir / "c.ini", text);
  try {
    run_experiment(cfg.string(), quiet(-1, dir / "run"));
    FAIL("run accepted an infeasible budget");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(exit_code(e.kind()) == 2);
  }
}

TEST_CASE("stop and resume reproduce an uninterrupted run") {
  const fs::path dir = fbtest::scratch_dir("resume");
  const fs::path cfg = write_file(dir / "small.ini", kSmall);
  const RunOutcome full = run_experiment(cfg.string(), quiet(-1, dir / "full"));
  REQUIRE(full.complete);

  const RunOutcome part = run_experiment(cfg.string(), quiet(1, dir / "split"));
  CHECK_FALSE(part.complete);
  CHECK(part.stages_done == 1);
  CHECK_THROWS_AS(write_run_report((dir / "split").string()), Error);
  const RunOutcome rest = resume_experiment((dir / "split").string(), quiet());
  CHECK(rest.complete);
  CHECK(rest.stages_done == full.stages_done);
  CHECK(rest.verify_pass == full.verify_pass);

  for (const char* f : {"fields/u_p4.field", "fields/u_p8.field", "summary.txt", "tables/per_p.csv"})
    CHECK_MESSAGE(slurp(dir / "full" / f) == slurp(dir / "split" / f), f);

  // a finished run resumes as a no-op
  const auto stamp = fs::last_write_time(dir / "split" / "summary.txt");
  const RunOutcome again = resume_experiment((dir / "split").string(), quiet());
  CHECK(again.complete);
  CHECK(again.verify_pass == full.verify_pass);
  CHECK(fs::last_write_time(dir / "split" / "summary.txt") == stamp);
}

TEST_CASE("checkpoints of another config are refused") {
  const fs::path dir = fbtest::scratch_dir("mismatch");
  const fs::path cfg = write_file(dir / "small.ini", kSmall);
  run_experiment(cfg.string(), quiet(1, dir / "run"));

  std::string other = kSmall;
  other.replace(other.find("ps = 4, 8"), 9, "ps = 4, 16");
  const fs::path cfg2 = write_file(dir / "other.ini", other);
  try {
    run_experiment(cfg2.string(), quiet(-1, dir / "run"));
    FAIL("foreign checkpoints accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptCheckpoint);
  }

  // edited config.ini no longer matches the stored hash
  std::string copied = slurp(dir / "run" / "config.ini");
  copied.replace(copied.find("ps = 4, 8"), 9, "ps = 4, 16");
  write_file(dir / "run" / "config.ini", copied);
  try {
    resume_experiment((dir / "run").string(), quiet());
    FAIL("hash mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptCheckpoint);
  }
}

TEST_CASE("corrupt metadata is detected") {
  const fs::path dir = fbtest::scratch_dir("corrupt");
  const fs::path cfg = write_file(dir / "small.ini", kSmall);
  run_experiment(cfg.string(), quiet(1, dir / "run"));
  write_file(dir / "run" / "checkpoints" / "stage_000.meta", "index=zero\n");
  try {
    resume_experiment((dir / "run").string(), quiet());
    FAIL("corrupt meta accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptCheckpoint);
  }
  try {
    resume_experiment((dir / "missing").string(), quiet());
    FAIL("missing dir accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptCheckpoint);
  }
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code(ErrorKind::Config) == 2);
  CHECK(exit_code(ErrorKind::Io) == 2);
  CHECK(exit_code(ErrorKind::CorruptCheckpoint) == 2);
  CHECK(exit_code(ErrorKind::GridMismatch) == 2);
  CHECK(exit_code(ErrorKind::StepFailure) == 3);
  CHECK(exit_code(ErrorKind::NotSaturable) == 3);
  CHECK(exit_code(ErrorKind::Instability) == 3);
}

TEST_CASE("oracle writer") {
  const fs::path dir = fbtest::scratch_dir("oracle");
  write_oracle(fbtest::benchmark_meta(), fbtest::benchmark_gamma(), {-1, -1, 1, 1}, 1.0 / 32, dir.string());
  CHECK(fs::is_regular_file(dir / "cone.field"));
  const std::string txt = slurp(dir / "oracle.txt");
  CHECK(txt.find("R_star") != std::string::npos);
  CHECK_THROWS_AS(write_oracle(fbtest::benchmark_meta(), -1.0, {-1, -1, 1, 1}, 1.0 / 32, dir.string()), Error);
}
