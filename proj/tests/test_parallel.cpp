// Every OpenMP kernel against its serial reference, with more threads than cores.
#include "sclab/error.hpp"
#include "sclab/exit_time.hpp"
#include "sclab/obstruction.hpp"
#include "sclab/parallel.hpp"
#include "sclab/registry.hpp"
#include "sclab/spectral.hpp"
#include "sclab/wkb.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <vector>

using namespace sclab;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

struct Threads {
  explicit Threads(int n) {
#ifdef _OPENMP
    saved = omp_get_max_threads();
    omp_set_num_threads(n);
#endif
  }
  ~Threads() {
#ifdef _OPENMP
    omp_set_num_threads(saved);
#endif
  }
  int saved = 1;
};

// Bitwise equality, NaN included.
bool same(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (std::size_t j = 0; j < a[i].size(); ++j)
      if (!(a[i][j] == b[i][j] || (std::isnan(a[i][j]) && std::isnan(b[i][j])))) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("for_each_index visits every index once and rethrows the lowest failure") {
  Threads t(4);
  std::vector<std::atomic<int>> hits(1000);
  for_each_index(Exec::parallel, hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);
  for (int round = 0; round < 5; ++round) {
    try {
      for_each_index(Exec::parallel, 500, [](std::size_t i) {
        if (i % 97 == 13) fail(ErrorCode::InvalidArgument, "index " + std::to_string(i));
      });
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("index 13") != std::string::npos);
    }
  }
}

TEST_CASE("characteristic fan and conjugate times") {
  Threads t(4);
  const auto S0 = gaussian_potential(-0.8, 0.6, v1(0.1));
  const auto V = TimePotential::controlled(cosine_potential(0.7, v1(1.3), 0.2), linear_potential(v1(1.0), 0.0),
                                           ControlSignal::piecewise({0.0, 0.7, 2.0}, {1.5, -2.0}));
  const auto seeds = SeedGrid::line(-1.5, 1.5, 23);
  const auto a = shoot_characteristics(ChartSpace::flat_lines(1), S0, V, seeds, 2.0, 1e-2, 1.0, Exec::serial);
  const auto b = shoot_characteristics(ChartSpace::flat_lines(1), S0, V, seeds, 2.0, 1e-2, 1.0, Exec::parallel);
  REQUIRE(a.times == b.times);
  CHECK(a.J == b.J);
  CHECK(same(a.transport_log, b.transport_log));
  CHECK(first_conjugate_time(a, Exec::serial) == first_conjugate_time(b, Exec::parallel));

  WKBFieldOptions so, po;
  so.exec = Exec::serial;
  so.region = po.region = BoxRegion::interval(0, -1.0, 1.0);
  const auto grid = UniformGrid::line(-3.0, 6.0, 96);
  const auto fs = wkb_field(a, gaussian_potential(1.0, 0.5, v1(0.0)), grid, 0.4, so);
  const auto fp = wkb_field(a, gaussian_potential(1.0, 0.5, v1(0.0)), grid, 0.4, po);
  CHECK(fs.S == fp.S);
  CHECK(fs.a == fp.a);
  CHECK(fs.valid == fp.valid);
}

TEST_CASE("sampled exit times") {
  Threads t(4);
  auto space = ChartSpace::flat_lines(2);
  space.set_product_split({{0}, {1}});
  HamiltonianSpec spec{space, tilted_cosine_potential(2, 1.0, 0, 1.0, 1, 0.0, {0}), linear_potential(v2(0, 1), 0.0)};
  ControlEnsemble ens;
  ens.count = 24;
  ens.amplitude = 50.0;
  ens.duration = 2.0;
  ens.adversarial = true;
  SampledExitOptions so, po;
  so.horizon = po.horizon = 2.0;
  so.exec = Exec::serial;
  const PhasePoint start{v2(0.0, 1.0), Vec::Zero(2)};
  const auto a = sampled_exit_time(spec, start, BoxRegion::interval(0, -1.0, 1.0), ens, so);
  const auto b = sampled_exit_time(spec, start, BoxRegion::interval(0, -1.0, 1.0), ens, po);
  CHECK(a.exit_times == b.exit_times);
  CHECK(a.member_seeds == b.member_seeds);
  CHECK(a.witness_index == b.witness_index);
}

TEST_CASE("localization experiment") {
  Threads t(4);
  auto cfg = default_obstruction_config();
  cfg.ensemble.count = 6;
  cfg.exec = Exec::serial;
  const auto a = run_localization_experiment(cfg);
  cfg.exec = Exec::parallel;
  const auto b = run_localization_experiment(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].delta == b.records[i].delta);
    CHECK(a.records[i].max_deviation == b.records[i].max_deviation);
    CHECK(a.records[i].min_distance == b.records[i].min_distance);
  }
  CHECK(a.certified_bound == b.certified_bound);
}

TEST_CASE("coupling matrices and the disc check") {
  Threads t(4);
  CHECK(gaussian_coupling(-0.7, 0.4, 0.1, 24, 0, Exec::serial).b == gaussian_coupling(-0.7, 0.4, 0.1, 24).b);
  const auto cs = cutoff_coupling(-1.0, 1.0, 0.0, 0.6, 8, Exec::serial);
  const auto cp = cutoff_coupling(-1.0, 1.0, 0.0, 0.6, 8, Exec::parallel);
  CHECK(cs.f == cp.f);
  CHECK(cs.b_hat.b == cp.b_hat.b);

  ControlEnsemble ens;
  ens.count = 12;
  ens.amplitude = 500.0;
  ens.duration = 1.0;
  DiscOptions so, po;
  so.exec = Exec::serial;
  const auto ds = invariant_disc_check(0.5, ens, 1.0, 0.8, so);
  const auto dp = invariant_disc_check(0.5, ens, 1.0, 0.8, po);
  CHECK(ds.member_drift == dp.member_drift);
  CHECK(ds.crossings == dp.crossings);
}
