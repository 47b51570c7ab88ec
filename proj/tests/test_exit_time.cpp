#include "sclab/error.hpp"
#include "sclab/exit_time.hpp"
#include "sclab/registry.hpp"

#include <doctest.h>

#include <cmath>

using namespace sclab;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// N1 = x (axis 0), N2 = y (axis 1); V = c x cos y so |d_x V| <= c, W = y.
HamiltonianSpec product_example(double c) {
  auto space = ChartSpace::flat_lines(2);
  space.set_product_split({{0}, {1}});
  return {space, tilted_cosine_potential(2, c, 0, 1.0, 1, 0.0, {0}), linear_potential(v2(0.0, 1.0), 0.0)};
}

HamiltonianSpec constant_force_line(double c) {
  // |V'| = c everywhere on the line; W constant.
  return {ChartSpace::flat_lines(1), linear_potential(v1(c), 0.0, {0}), constant_potential(1, 1.0)};
}

}  // namespace

TEST_CASE("chaplygin_compare examples") {
  const Field f = [](const Vec& z) -> Vec { return z; };
  const Field g = [](const Vec& z) -> Vec { return 2.0 * z; };
  auto r = chaplygin_compare(f, g, v1(1.0), v1(1.0), 1.0, 1e-3);
  CHECK(r.lower.back()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-10));
  CHECK(r.upper.back()[0] == doctest::Approx(std::exp(2.0)).epsilon(1e-10));
  auto same = chaplygin_compare(f, f, v1(1.0), v1(1.0), 1.0, 1e-3);
  CHECK(std::abs(same.min_gap) < 1e-14);
  const Field zero = [](const Vec& z) -> Vec { return Vec::Zero(z.size()); };
  const Field one = [](const Vec& z) -> Vec { return Vec::Ones(z.size()); };
  auto lin = chaplygin_compare(zero, one, v1(0.0), v1(0.0), 2.0, 0.1);
  CHECK(lin.upper.back()[0] == doctest::Approx(2.0));
  CHECK(lin.min_gap >= 0.0);
  try {
    chaplygin_compare(one, zero, v1(0.0), v1(0.0), 1.0, 0.1);
    FAIL("expected OrderingViolated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OrderingViolated);
  }
}

TEST_CASE("exit_lower_bound examples") {
  const auto omega = BoxRegion::interval(0, -1.0, 1.0);
  for (double c : {0.5, 1.0, 4.0}) {
    auto b = exit_lower_bound(constant_force_line(c), omega, {v1(0.0), v1(0.0)});
    CHECK(std::abs(b.bound - std::sqrt(2.0 / c)) < 1e-8);
    CHECK(b.bound <= std::sqrt(2.0 / c));
  }
  CHECK(exit_lower_bound(constant_force_line(1.0), omega, {v1(1.0), v1(0.0)}).bound == 0.0);
  ExitBoundOptions opts;
  opts.horizon = 7.5;
  HamiltonianSpec still{ChartSpace::flat_lines(1), constant_potential(1, 2.0), constant_potential(1, 1.0)};
  auto b = exit_lower_bound(still, omega, {v1(0.3), v1(0.0)}, opts);
  CHECK(b.bound == 7.5);
  CHECK(b.reached_horizon);
}

TEST_CASE("exit_lower_bound on the product example") {
  const double c = 2.0;
  auto spec = product_example(c);
  auto b = exit_lower_bound(spec, BoxRegion::interval(0, -1.0, 1.0), {v2(0.0, 1.0), v2(0.0, 0.0)});
  CHECK(std::abs(b.bound - std::sqrt(2.0 / c)) < 1e-8);
  CHECK(b.per_pattern.size() == 2);
  CHECK(b.max_d1W == 0.0);
}

TEST_CASE("exit_lower_bound with initial momentum follows the closed form") {
  // x' = p, p' = +-c from (x0, p0): first crossing of +-1 over both signs.
  const double c = 1.0, x0 = 0.2, p0 = 0.7;
  auto b = exit_lower_bound(constant_force_line(c), BoxRegion::interval(0, -1.0, 1.0), {v1(x0), v1(p0)});
  // Pushing forward: x0 + p0 t + c t^2 / 2 = 1.
  const double t_fwd = (-p0 + std::sqrt(p0 * p0 + 2 * c * (1 - x0))) / c;
  CHECK(std::abs(b.bound - t_fwd) < 1e-8);
}

TEST_CASE("W depending on N1 violates the hypothesis") {
  auto space = ChartSpace::flat_lines(2);
  space.set_product_split({{0}, {1}});
  HamiltonianSpec spec{space, tilted_cosine_potential(2, 1.0, 0, 1.0, 1, 0.0, {0}), linear_potential(v2(1.0, 0.0), 0.0)};
  try {
    exit_lower_bound(spec, BoxRegion::interval(0, -1.0, 1.0), {v2(0.0, 1.0), Vec::Zero(2)});
    FAIL("expected HypothesisViolated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HypothesisViolated);
  }
}

TEST_CASE("shrinking Omega never increases the bound") {
  auto spec = product_example(1.0);
  const PhasePoint start{v2(0.1, 1.0), v2(0.2, 0.0)};
  double previous = 1e9;
  for (double half : {2.0, 1.5, 1.0, 0.6, 0.3}) {
    const double b = exit_lower_bound(spec, BoxRegion::interval(0, -half, half), start).bound;
    CHECK(b <= previous + 1e-12);
    previous = b;
  }
}

TEST_CASE("non-flat N1 metric uses the norm factor") {
  // g^{xx} = 4 constant: x' = 4 p, p' = +-K c with K = sqrt(1/4) = 1/2.
  ChartSpace space({0.0}, [](const Vec&) -> Mat { return Mat::Constant(1, 1, 4.0); },
                   [](const Vec&) { return std::vector<Mat>{Mat::Zero(1, 1)}; });
  HamiltonianSpec spec{space, linear_potential(v1(1.0), 0.0, {0}), constant_potential(1, 1.0)};
  CHECK(norm_factor(spec, v1(0.0)) == doctest::Approx(0.5));
  auto b = exit_lower_bound(spec, BoxRegion::interval(0, -1.0, 1.0), {v1(0.0), v1(0.0)});
  // x = 4 * (1/2) t^2 / 2 = t^2 reaches 1 at t = 1.
  CHECK(std::abs(b.bound - 1.0) < 1e-8);
}

TEST_CASE("sampled exit times respect the bound") {
  const double c = 1.0;
  auto spec = product_example(c);
  ControlEnsemble ens;
  ens.count = 60;
  ens.amplitude = 100.0;
  ens.duration = 3.0;
  ens.seed = 11;
  SampledExitOptions opts;
  opts.horizon = 3.0;
  opts.exec = Exec::serial;
  const PhasePoint start{v2(0.0, 1.0), Vec::Zero(2)};
  auto report = sampled_exit_time(spec, start, BoxRegion::interval(0, -1.0, 1.0), ens, opts);
  CHECK(report.hypotheses_hold);
  CHECK(std::abs(report.analytic_bound - std::sqrt(2.0)) < 1e-8);
  CHECK(report.violations == 0);
  CHECK(report.sampled_min_exit >= report.analytic_bound);
  CHECK(report.unresolved == 0);
  CHECK(report.exit_times.size() == 60);

  // Amplitudes x10: the bound is unchanged and still never beaten.
  ens.amplitude = 1000.0;
  ens.count = 15;
  opts.step = 2e-4;
  auto strong = sampled_exit_time(spec, start, BoxRegion::interval(0, -1.0, 1.0), ens, opts);
  CHECK(strong.analytic_bound == report.analytic_bound);
  CHECK(strong.violations == 0);
}

TEST_CASE("sampled exit without boundary returns the horizon") {
  auto spec = product_example(1.0);
  ControlEnsemble ens;
  ens.count = 5;
  ens.amplitude = 10.0;
  ens.duration = 2.0;
  SampledExitOptions opts;
  opts.horizon = 2.0;
  const double inf = std::numeric_limits<double>::infinity();
  auto r = sampled_exit_time(spec, {v2(0.0, 1.0), Vec::Zero(2)}, BoxRegion::interval(0, -inf, inf), ens, opts);
  CHECK(r.sampled_min_exit == 2.0);
  CHECK(r.analytic_bound == 2.0);
}

TEST_CASE("W = x on N1: strong impulses exit arbitrarily fast") {
  HamiltonianSpec spec{ChartSpace::flat_lines(1), zero_potential(1), linear_potential(v1(1.0), 0.0)};
  SampledExitOptions opts;
  opts.horizon = 5.0;
  const BoxRegion omega = BoxRegion::interval(0, -1.0, 1.0);
  double previous = 1e9;
  for (double A : {1.0, 10.0, 100.0, 1000.0}) {
    opts.step = 1e-2 / std::sqrt(A);
    const double t = controlled_exit_time(spec, {v1(0.0), v1(0.0)}, omega, ControlSignal::constant(-A, 5.0), opts);
    CHECK(std::abs(t - std::sqrt(2.0 / A)) < 1e-6);
    CHECK(t < previous);
    previous = t;
  }
  ControlEnsemble ens;
  ens.count = 10;
  ens.amplitude = 100.0;
  ens.duration = 5.0;
  auto report = sampled_exit_time(spec, {v1(0.0), v1(0.0)}, omega, ens, opts);
  CHECK_FALSE(report.hypotheses_hold);
  CHECK(std::isnan(report.analytic_bound));
}

TEST_CASE("serial and parallel sweeps agree exactly") {
  auto spec = product_example(1.0);
  ControlEnsemble ens;
  ens.count = 16;
  ens.amplitude = 50.0;
  ens.duration = 2.0;
  ens.seed = 99;
  SampledExitOptions opts;
  opts.horizon = 2.0;
  opts.exec = Exec::serial;
  const PhasePoint start{v2(0.0, 1.0), Vec::Zero(2)};
  auto a = sampled_exit_time(spec, start, BoxRegion::interval(0, -1.0, 1.0), ens, opts);
  opts.exec = Exec::parallel;
  auto b = sampled_exit_time(spec, start, BoxRegion::interval(0, -1.0, 1.0), ens, opts);
  CHECK(a.exit_times == b.exit_times);
  CHECK(a.witness_index == b.witness_index);
}

TEST_CASE("ensemble members are deterministic and bounded") {
  ControlEnsemble ens;
  ens.count = 50;
  ens.amplitude = 3.0;
  ens.duration = 1.5;
  ens.latin_hypercube = true;
  ens.adversarial = true;
  CHECK(ens.size() == 52);
  std::vector<int> strata(10, 0);
  for (int i = 0; i < ens.count; ++i) {
    const auto u = ens.member(i);
    CHECK(u.max_abs() <= 3.0);
    CHECK(u.duration() == 1.5);
    CHECK(u.intervals() >= 1);
    CHECK(u.intervals() <= 8);
    CHECK(u.values == ens.member(i).values);
    strata[std::min(9, static_cast<int>((u.values(0, 0) + 3.0) / 0.6))]++;
  }
  for (int s : strata) CHECK(s == 5);
  CHECK(ens.member(50).values(0, 0) == 3.0);
  CHECK(ens.member(51).values(0, 0) == -3.0);
}
