// Serial reference vs OpenMP kernel on the hot loops. Arg 0 = serial, 1 = parallel.
#include "sclab/exit_time.hpp"
#include "sclab/obstruction.hpp"
#include "sclab/registry.hpp"
#include "sclab/spectral.hpp"
#include "sclab/wkb.hpp"

#include <benchmark/benchmark.h>

using namespace sclab;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

Vec v1(double a) { return Vec::Constant(1, a); }

void BM_characteristic_fan(benchmark::State& state) {
  const auto S0 = gaussian_potential(-0.8, 0.6, v1(0.1));
  const auto V = TimePotential::stationary(cosine_potential(0.7, v1(1.3), 0.2));
  const auto seeds = SeedGrid::line(-1.5, 1.5, 64);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        shoot_characteristics(ChartSpace::flat_lines(1), S0, V, seeds, 2.0, 1e-2, 1.0, exec_of(state)));
}
BENCHMARK(BM_characteristic_fan)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_split_step_ensemble(benchmark::State& state) {
  auto cfg = default_obstruction_config();
  cfg.ensemble.count = 8;
  cfg.eps_grid = {0.1, 0.4};
  cfg.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(run_localization_experiment(cfg));
}
BENCHMARK(BM_split_step_ensemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_exit_ensemble(benchmark::State& state) {
  auto space = ChartSpace::flat_lines(2);
  space.set_product_split({{0}, {1}});
  Vec slope(2);
  slope << 0.0, 1.0;
  HamiltonianSpec spec{space, tilted_cosine_potential(2, 1.0, 0, 1.0, 1, 0.0, {0}), linear_potential(slope, 0.0)};
  ControlEnsemble ens;
  ens.count = 32;
  ens.amplitude = 100.0;
  ens.duration = 3.0;
  SampledExitOptions opts;
  opts.horizon = 3.0;
  opts.exec = exec_of(state);
  PhasePoint start{Vec::Zero(2), Vec::Zero(2)};
  start.x[1] = 1.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(sampled_exit_time(spec, start, BoxRegion::interval(0, -1.0, 1.0), ens, opts));
}
BENCHMARK(BM_exit_ensemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_gaussian_coupling(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_coupling(-1.0, 1.0, 0.0, 128, 0, exec_of(state)));
}
BENCHMARK(BM_gaussian_coupling)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_disc_check(benchmark::State& state) {
  ControlEnsemble ens;
  ens.count = 32;
  ens.amplitude = 1000.0;
  ens.max_intervals = 6;
  ens.duration = 2.0;
  DiscOptions opts;
  opts.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(invariant_disc_check(0.5, ens, 2.0, 0.1, opts));
}
BENCHMARK(BM_disc_check)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
