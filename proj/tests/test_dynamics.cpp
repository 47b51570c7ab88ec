#include "sclab/dynamics.hpp"
#include "sclab/error.hpp"
#include "sclab/registry.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace sclab;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
PhasePoint pp(double x, double p) { return {v1(x), v1(p)}; }

HamiltonianSpec harmonic_line(PotentialField W) {
  return {ChartSpace::flat_lines(1), harmonic_potential(1.0, v1(0.0)), std::move(W)};
}

HamiltonianSpec free_line() { return {ChartSpace::flat_lines(1), zero_potential(1), zero_potential(1)}; }

}  // namespace

TEST_CASE("hamiltonian examples") {
  auto spec = harmonic_line(linear_potential(v1(1.0), 0.0));
  CHECK(hamiltonian(spec, pp(0, 0), 5.0) == 0.0);
  CHECK(hamiltonian(spec, pp(1, 1), 0.0) == doctest::Approx(1.0));
  CHECK(hamiltonian(spec, pp(1, 0), 2.0) == doctest::Approx(2.5));
}

TEST_CASE("control signal basics") {
  auto u = ControlSignal::piecewise({0.0, 0.5, 2.0}, {1.0, -3.0});
  CHECK(u.duration() == 2.0);
  CHECK(u.value_at(0.0)[0] == 1.0);
  CHECK(u.value_at(0.5)[0] == -3.0);
  CHECK(u.value_at(2.0)[0] == -3.0);
  CHECK(u.value_at(2.5)[0] == 0.0);
  CHECK(u.integral(1.0)[0] == doctest::Approx(0.5 - 1.5));
  CHECK(u.max_abs() == 3.0);
  auto c = ControlSignal::concat(u, ControlSignal::constant(7.0, 1.0));
  CHECK(c.duration() == 3.0);
  CHECK(c.value_at(2.5)[0] == 7.0);
  CHECK_THROWS_AS(ControlSignal::piecewise({0.0, 1.0, 1.0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(ControlSignal::piecewise({0.0, 1.0}, {std::nan("")}), Error);
}

TEST_CASE("evolve examples") {
  const double pi = std::numbers::pi;
  auto osc = harmonic_line(zero_potential(1));
  auto end = evolve(osc, pp(1, 0), ControlSignal::constant(0.0, pi), 0.01).final_state();
  CHECK(std::abs(end.x[0] + 1.0) < 1e-6);
  CHECK(std::abs(end.p[0]) < 1e-6);

  auto free = free_line();
  auto fe = evolve(free, pp(0.3, -1.2), ControlSignal::constant(40.0, 2.5), 0.01).final_state();
  CHECK(fe.x[0] == doctest::Approx(0.3 - 1.2 * 2.5).epsilon(1e-12));

  HamiltonianSpec pushed{ChartSpace::flat_lines(1), zero_potential(1), linear_potential(v1(1.0), 0.0)};
  auto pe = evolve(pushed, pp(0, 0), ControlSignal::constant(-1.0, 1.0), 0.01).final_state();
  CHECK(pe.x[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pe.p[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evolve restarts at breakpoints and samples them") {
  HamiltonianSpec pushed{ChartSpace::flat_lines(1), zero_potential(1), linear_potential(v1(1.0), 0.0)};
  auto u = ControlSignal::piecewise({0.0, 0.3, 1.0}, {-2.0, 1.0});
  auto traj = evolve(pushed, pp(0, 0), u, 0.07);
  bool has_breakpoint = false;
  for (double t : traj.times) has_breakpoint |= (t == 0.3);
  CHECK(has_breakpoint);
  // Exact piecewise-parabolic motion.
  const double x1 = 0.5 * 2.0 * 0.09, p1 = 0.6;
  const double x2 = x1 + p1 * 0.7 - 0.5 * 0.49, p2 = p1 - 0.7;
  CHECK(traj.final_state().x[0] == doctest::Approx(x2).epsilon(1e-12));
  CHECK(traj.final_state().p[0] == doctest::Approx(p2).epsilon(1e-12));
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.size() == traj.states.size());
}

TEST_CASE("energy is conserved on constant-control intervals") {
  HamiltonianSpec spec{ChartSpace::flat_lines(1), cosine_potential(2.0, v1(1.0), 0.0), harmonic_potential(1.0, v1(0.5))};
  auto u = ControlSignal::piecewise({0.0, 0.7, 1.5, 2.0}, {3.0, -2.0, 0.5});
  auto traj = evolve(spec, pp(0.2, 0.4), u, 0.005);
  for (int k = 0; k < u.intervals(); ++k) {
    const double a = u.breakpoints[k], b = u.breakpoints[k + 1];
    double h0 = std::nan("");
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
      if (traj.times[s] < a || traj.times[s] > b) continue;
      const double h = hamiltonian(spec, traj.states[s], u.values(k, 0));
      if (std::isnan(h0)) h0 = h;
      CHECK(std::abs(h - h0) <= 1e-7 * std::max(1.0, std::abs(h0)));
    }
  }
}

TEST_CASE("evolve composition over split intervals") {
  HamiltonianSpec spec{ChartSpace::flat_lines(1), cosine_potential(1.0, v1(1.3), 0.2), linear_potential(v1(1.0), 0.0)};
  auto full = evolve_endpoint(spec, pp(0.1, 0.0), ControlSignal::constant(2.0, 2.0), 0.01);
  auto half = evolve_endpoint(spec, pp(0.1, 0.0), ControlSignal::constant(2.0, 1.0), 0.01);
  auto rest = evolve_endpoint(spec, half, ControlSignal::constant(2.0, 1.0), 0.01);
  CHECK((full.stacked() - rest.stacked()).norm() < 1e-7);
}

TEST_CASE("flow_jacobian closed forms") {
  const double T = 1.3;
  auto osc = harmonic_line(zero_potential(1));
  CHECK(flow_jacobian(osc, pp(0.2, 0.1), ControlSignal::constant(0.0, T), 0.0).isApprox(Mat::Identity(2, 2)));
  Mat rot(2, 2);
  rot << std::cos(T), std::sin(T), -std::sin(T), std::cos(T);
  CHECK((flow_jacobian(osc, pp(1, 0), ControlSignal::constant(0.0, T), T) - rot).cwiseAbs().maxCoeff() < 1e-6);
  Mat shear(2, 2);
  shear << 1, T, 0, 1;
  CHECK((flow_jacobian(free_line(), pp(1, 0), ControlSignal::constant(3.0, T), T) - shear).cwiseAbs().maxCoeff() <
        1e-10);
}

TEST_CASE("flow_jacobian matches finite differences and has unit determinant") {
  const std::vector<int> none;
  Vec c(2);
  c << 0.2, -0.1;
  Vec k(2);
  k << 1.0, 0.5;
  auto warped = ChartSpace(
      {0.0, 0.0},
      [](const Vec& x) -> Mat {
        Mat g(2, 2);
        g << 1.0 + 0.2 * x[1] * x[1], 0.0, 0.0, 1.5 + 0.3 * std::sin(x[0]);
        return g;
      },
      [](const Vec& x) {
        Mat d0 = Mat::Zero(2, 2), d1 = Mat::Zero(2, 2);
        d0(1, 1) = 0.3 * std::cos(x[0]);
        d1(0, 0) = 0.4 * x[1];
        return std::vector<Mat>{d0, d1};
      });
  HamiltonianSpec spec{warped, gaussian_potential(1.5, 0.7, c), cosine_potential(1.0, k, 0.1)};
  auto u = ControlSignal::piecewise({0.0, 0.4, 1.0}, {2.0, -1.0});
  PhasePoint start{Vec::Constant(2, 0.1), Vec::Constant(2, 0.3)};
  const Mat J = flow_jacobian(spec, start, u, 1.0);
  CHECK(std::abs(J.determinant() - 1.0) < 1e-6);
  const double h = 1e-5;
  const Vec y0 = start.stacked();
  for (int j = 0; j < 4; ++j) {
    Vec yp = y0, ym = y0;
    yp[j] += h;
    ym[j] -= h;
    const Vec fd = (evolve_endpoint(spec, PhasePoint::from_stacked(yp), u, 1e-3).stacked() -
                    evolve_endpoint(spec, PhasePoint::from_stacked(ym), u, 1e-3).stacked()) /
                   (2 * h);
    CHECK((fd - J.col(j)).norm() <= 1e-3 * std::max(1.0, J.col(j).norm()));
  }
}

TEST_CASE("multi-channel control potentials") {
  Vec e1(2), e2(2);
  e1 << 1, 0;
  e2 << 0, 1;
  HamiltonianSpec spec{ChartSpace::flat_lines(2), zero_potential(2),
                       std::vector<PotentialField>{linear_potential(e1, 0.0), linear_potential(e2, 0.0)}};
  Vec u(2);
  u << -1.0, 2.0;
  auto end = evolve_endpoint(spec, {Vec::Zero(2), Vec::Zero(2)}, ControlSignal::constant(u, 1.0), 0.1);
  CHECK(end.p[0] == doctest::Approx(1.0));
  CHECK(end.p[1] == doctest::Approx(-2.0));
  CHECK(end.x[1] == doctest::Approx(-1.0));
}

TEST_CASE("overflow guard fires for finite-time escape") {
  // V = -x^4 sends the particle to infinity in finite time.
  HamiltonianSpec spec{ChartSpace::flat_lines(1), polynomial_potential(1, 0, {0, 0, 0, 0, -1.0}), zero_potential(1)};
  try {
    evolve(spec, pp(1.0, 1.0), ControlSignal::constant(0.0, 10.0), 1e-3);
    FAIL("expected escape");
  } catch (const Error& e) {
    CHECK((e.code() == ErrorCode::TrajectoryEscape || e.code() == ErrorCode::StepTooCoarse));
  }
}

TEST_CASE("evolve_until_exit locates the crossing") {
  // x = t^2 / 2 under constant unit force crosses x = 1 at t = sqrt 2.
  HamiltonianSpec spec{ChartSpace::flat_lines(1), linear_potential(v1(-1.0), 0.0), zero_potential(1)};
  auto inside = [](const Vec& x) { return std::abs(x[0]) < 1.0; };
  auto ev = evolve_until_exit(spec, pp(0, 0), ControlSignal::constant(0.0, 5.0), 5.0, 0.01, inside);
  CHECK(ev.exited);
  CHECK(std::abs(ev.time - std::sqrt(2.0)) < 2e-8);
  CHECK(ev.last_inside <= ev.time);
  CHECK(ev.time - ev.last_inside <= 1e-8);
  auto stay = evolve_until_exit(spec, pp(0, 0), ControlSignal::constant(0.0, 1.0), 1.0, 0.01, inside);
  CHECK_FALSE(stay.exited);
  CHECK(stay.time == 1.0);
}

TEST_CASE("trajectory CSV layout") {
  auto traj = evolve(free_line(), pp(0, 1), ControlSignal::constant(0.5, 0.02), 0.01);
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  const std::string text = out.str();
  CHECK(text.rfind("t,x_1,p_1,u\n", 0) == 0);
  CHECK(text.find("0.5\n") != std::string::npos);
}
