#include "sclab/error.hpp"
#include "sclab/harness.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sclab;
namespace fs = std::filesystem;

namespace {

template <class F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(ErrorCode::InvalidArgument, "");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sclab_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("minimal spectral config is filled with defaults") {
  const auto c = parse_config("experiment = spectral\n");
  CHECK(c.kind() == ExperimentKind::spectral);
  CHECK(c.number("spectral.a") == -1.0);
  CHECK(c.integer("spectral.N") == 12);
  CHECK(c.integer("ensemble.count") == 100);
  CHECK(c.seed() == 1);
  CHECK(c.output_dir() == "out");
  const auto again = parse_config(default_config_text(ExperimentKind::spectral));
  CHECK(again.canonical() == c.canonical());
}

TEST_CASE("parse errors carry the line, validation errors the key") {
  const auto unknown = error_of([] { parse_config("experiment = spectral\nfoo.bar = 3\n"); });
  CHECK(unknown.code() == ErrorCode::ValidationError);
  CHECK(std::string(unknown.what()).find("foo.bar") != std::string::npos);
  const auto negative = error_of([] { parse_config("experiment = exit-time\nensemble.count = -5\n"); });
  CHECK(negative.code() == ErrorCode::ValidationError);
  CHECK(std::string(negative.what()).find("ensemble.count") != std::string::npos);
  const auto syntax = error_of([] { parse_config("# header\nexperiment = wkb\nthis is not a pair\n"); });
  CHECK(syntax.code() == ErrorCode::ParseError);
  CHECK(std::string(syntax.what()).find("line 3") != std::string::npos);
  CHECK(error_of([] { parse_config("experiment = wkb\nseed = 1\nseed = 2\n"); }).code() == ErrorCode::ParseError);
  CHECK(error_of([] { parse_config("seed = 1\n"); }).code() == ErrorCode::ValidationError);
  CHECK(error_of([] { parse_config("experiment = teleport\n"); }).code() == ErrorCode::ValidationError);
  CHECK(error_of([] { parse_config("experiment = steer\nsteer.k = fast\n"); }).code() == ErrorCode::ValidationError);
  CHECK(error_of([] { parse_config("experiment = steer\nV.name = harmonic\nV.slope = 2\n"); }).code() ==
        ErrorCode::ValidationError);
  CHECK(error_of([] { parse_config("experiment = steer\nV.name = nonexistent\n"); }).code() ==
        ErrorCode::ValidationError);
  CHECK(error_of([] { parse_config("experiment = wkb\n", ExperimentKind::steer); }).code() ==
        ErrorCode::ValidationError);
}

TEST_CASE("potential sections switch their defaults with the name") {
  const auto c = parse_config("experiment = steer\nW.name = gaussian\nW.width = 0.5\n");
  CHECK(c.text("W.name") == "gaussian");
  CHECK(!c.has("W.slope"));
  CHECK(c.number("V.k") == 1.0);
  const auto inline_comment = parse_config("experiment = steer  # trailing\nsteer.eps = 0.1 0.01\n");
  CHECK(inline_comment.numbers("steer.eps") == std::vector<double>{0.1, 0.01});
}

TEST_CASE("config hash tracks content and seed but not the output directory") {
  auto a = parse_config("experiment = spectral\noutput = here\n");
  auto b = parse_config("experiment = spectral\noutput = there\n");
  CHECK(a.hash() == b.hash());
  b.set("seed", "9");
  CHECK(a.hash() != b.hash());
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("steer demo runs with an eps sweep table") {
  const auto dir = scratch("steer");
  const auto c = parse_config("experiment = steer\n");
  const auto r = run_experiment(c, dir);
  CHECK(r.status == 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["status"] == "ok");
  CHECK(summary["results"]["loglog_slope"].get<double>() >= 0.9);
  const std::string table = slurp(dir / "steer_sweep.csv");
  CHECK(table.rfind("# sclab steer config_hash=", 0) == 0);
  CHECK(table.find("seed=1") != std::string::npos);
  std::istringstream lines(table);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 2 + 4);
}

TEST_CASE("same config and seed give byte-identical CSVs") {
  const std::string text = "experiment = spectral\nensemble.count = 6\nspectral.N = 6\nspectral.N_big = 40\n";
  const auto c = parse_config(text);
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  const auto r1 = run_experiment(c, d1);
  const auto r2 = run_experiment(c, d2, Exec::serial);
  REQUIRE(r1.status == 0);
  REQUIRE(r1.files == r2.files);
  for (const auto& f : r1.files) {
    CHECK(slurp(d1 / f) == slurp(d2 / f));
    if (f.ends_with(".csv")) CHECK(slurp(d1 / f).rfind("# sclab spectral config_hash=" , 0) == 0);
  }
  auto seeded = c;
  seeded.set("seed", "2");
  const auto d3 = scratch("det3");
  run_experiment(seeded, d3);
  CHECK(slurp(d1 / "disc.csv") != slurp(d3 / "disc.csv"));
}

TEST_CASE("obstruction with W = x on omega exits with status 2") {
  const auto dir = scratch("broken");
  const auto c = parse_config("experiment = obstruction\nensemble.count = 2\nW.name = linear\nW.slope = 1\n");
  const auto r = run_experiment(c, dir);
  CHECK(r.status == 2);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["error"]["code"] == "HypothesisViolated");
}

TEST_CASE("module errors map to status 1 with a JSON record") {
  const auto dir = scratch("error");
  // Field time past the caustic of S0 = -x^2/2.
  const auto c = parse_config("experiment = wkb\nwkb.field_time = 1.0\n");
  const auto r = run_experiment(c, dir);
  CHECK(r.status == 1);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["status"] == "error");
  CHECK(summary["error"]["code"] == "CausticReached");
}

TEST_CASE("exit-time with W depending on N1 reports the hypothesis failure") {
  const auto dir = scratch("exitbroken");
  const auto c = parse_config("experiment = exit-time\nensemble.count = 3\nW.name = linear\nW.slope = 1, 0\n");
  CHECK(run_experiment(c, dir).status == 2);
}
