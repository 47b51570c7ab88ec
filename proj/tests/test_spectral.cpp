#include "sclab/error.hpp"
#include "sclab/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sclab;

namespace {

constexpr double pi = std::numbers::pi;

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("Gauss-Hermite rule integrates polynomials exactly") {
  const auto rule = GaussHermite::rule(20);
  double m0 = 0.0, m2 = 0.0, m4 = 0.0, m38 = 0.0, odd = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double x = rule.nodes[k], w = rule.weights[k];
    m0 += w;
    m2 += w * x * x;
    m4 += w * std::pow(x, 4);
    m38 += w * std::pow(x, 38);
    odd += w * std::pow(x, 7);
  }
  CHECK(m0 == doctest::Approx(std::sqrt(pi)).epsilon(1e-14));
  CHECK(m2 == doctest::Approx(std::sqrt(pi) / 2).epsilon(1e-14));
  CHECK(m4 == doctest::Approx(3 * std::sqrt(pi) / 4).epsilon(1e-14));
  // (37)!! sqrt(pi) / 2^19
  double dfact = 1.0;
  for (int k = 37; k > 1; k -= 2) dfact *= k;
  CHECK(m38 == doctest::Approx(dfact * std::sqrt(pi) / std::pow(2.0, 19)).epsilon(1e-12));
  CHECK(std::abs(odd) < 1e-13);
}

TEST_CASE("Hermite basis is orthonormal and diagonalizes the oscillator") {
  for (int N : {4, 12, 40}) {
    const auto basis = HermiteBasis::make(N);
    CHECK(basis.quadrature.nodes.size() >= static_cast<std::size_t>(4 * N));
    CHECK(basis.orthonormality_defect() < 1e-10);
  }
  // -phi'' + x^2 phi = (2n + 1) phi, second difference at a few points.
  const auto basis = HermiteBasis::make(8);
  const double h = 1e-3;
  for (int n : {0, 1, 5}) {
    for (double x : {-1.3, 0.2, 2.1}) {
      const double d2 = (basis.phi(n, x + h) - 2 * basis.phi(n, x) + basis.phi(n, x - h)) / (h * h);
      CHECK(-d2 + x * x * basis.phi(n, x) == doctest::Approx((2 * n + 1) * basis.phi(n, x)).epsilon(1e-5));
    }
  }
}

TEST_CASE("gaussian_coupling closed forms") {
  const auto B0 = gaussian_coupling(-1.0, 0.0, 0.0, 6);
  CHECK(std::abs(B0.b(0, 0) - 1.0 / std::sqrt(2.0)) < 1e-10);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      if ((i + j) % 2 == 1) CHECK(std::abs(B0.b(i, j)) < 1e-14);
  const auto B1 = gaussian_coupling(-1.0, 1.0, 0.0, 6);
  CHECK(std::abs(B1.b(0, 1) - 0.25 * std::exp(0.125)) < 1e-10);
  CHECK(B1.b(0, 0) == doctest::Approx(std::exp(1.0 / 8.0) / std::sqrt(2.0)).epsilon(1e-13));
  CHECK(B1.crosscheck_error < 1e-12);
  CHECK((B1.b - B1.b.transpose()).cwiseAbs().maxCoeff() == 0.0);
  // General (a, b, c): b_00 = (1 - a)^{-1/2} exp(b^2 / (4 (1 - a)) + c).
  const double a = -0.4, b = 0.7, c = -0.3;
  const auto B2 = gaussian_coupling(a, b, c, 5);
  CHECK(B2.b(0, 0) == doctest::Approx(std::exp(b * b / (4 * (1 - a)) + c) / std::sqrt(1 - a)).epsilon(1e-13));
  CHECK(B2.crosscheck_error < 1e-12);
  CHECK(code_of([] { gaussian_coupling(1.0, 0.0, 0.0, 4); }) == ErrorCode::QuadratureDivergence);
  CHECK(code_of([] { gaussian_coupling(2.5, 0.0, 0.0, 4); }) == ErrorCode::QuadratureDivergence);
}

TEST_CASE("coupling entries are stable when the quadrature order doubles") {
  const int N = 16;
  const auto lo = gaussian_coupling(-1.0, 1.0, 0.0, N, 4 * N);
  const auto hi = gaussian_coupling(-1.0, 1.0, 0.0, N, 8 * N);
  CHECK((lo.b - hi.b).cwiseAbs().maxCoeff() < 1e-10);
  const auto serial = gaussian_coupling(-1.0, 1.0, 0.0, N, 0, Exec::serial);
  CHECK((serial.b - lo.b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cutoff_coupling limits and monotonicity") {
  const double a = -1.0, b = 1.0, c = 0.0;
  const int N = 6;
  const auto full = gaussian_coupling(a, b, c, N);
  const auto zero = cutoff_coupling(a, b, c, 0.0, N);
  CHECK(zero.f.cwiseAbs().maxCoeff() == 0.0);
  CHECK((zero.b_hat.b - full.b).cwiseAbs().maxCoeff() == 0.0);
  const auto wide = cutoff_coupling(a, b, c, 20.0, N);
  CHECK((wide.f - full.b).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(wide.b_hat.b.cwiseAbs().maxCoeff() < 1e-10);
  REQUIRE(wide.b_hat.eps.has_value());

  double prev = 0.0;
  for (double eps : {0.1, 0.3, 0.7, 1.5, 3.0}) {
    const double f00 = cutoff_coupling(-1.0, 0.0, 0.0, eps, 2).f(0, 0);
    CHECK(f00 > prev);
    prev = f00;
  }
  // |f_ij(eps)| <= C eps: the slope f / eps tends to 2 * integrand(0).
  std::vector<double> h(N);
  hermite_polynomials(0.0, N, h.data());
  for (double eps : {1e-2, 1e-3}) {
    const auto small = cutoff_coupling(a, b, c, eps, N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        const double slope = small.f(i, j) / eps;
        CHECK(std::abs(slope - 2 * h[i] * h[j]) < 10 * eps);
      }
  }
}

TEST_CASE("minor_connectivity examples") {
  CHECK(!minor_connectivity(Mat::Identity(2, 2), 2).connected);
  CHECK(minor_connectivity(Mat::Identity(2, 2), 2).components.size() == 2);
  Mat tri = Mat::Zero(7, 7);
  for (int i = 0; i < 7; ++i) {
    tri(i, i) = 2.0;
    if (i + 1 < 7) tri(i, i + 1) = tri(i + 1, i) = -0.5;
  }
  for (int k = 1; k <= 7; ++k) CHECK(minor_connectivity(tri, k).connected);
  Mat blocks = Mat::Identity(4, 4);
  blocks(0, 1) = blocks(1, 0) = 1.0;
  blocks(2, 3) = blocks(3, 2) = 1.0;
  const auto split = minor_connectivity(blocks, 4);
  CHECK(!split.connected);
  REQUIRE(split.components.size() == 2);
  CHECK(split.components[0] == std::vector<int>{0, 1});
  CHECK(split.components[1] == std::vector<int>{2, 3});
  // Threshold is relative to the max-norm.
  Mat scaled = 1e-20 * tri;
  CHECK(minor_connectivity(scaled, 7).connected);

  const auto B = gaussian_coupling(-1.0, 1.0, 0.0, 12);
  for (int k = 1; k <= 12; ++k) CHECK(minor_connectivity(B.b, k, 1e-12).connected);
  // Parity decouples the even Gaussian.
  const auto even = gaussian_coupling(-1.0, 0.0, 0.0, 6);
  const auto parity = minor_connectivity(even.b, 6, 1e-12);
  CHECK(!parity.connected);
  CHECK(parity.components.size() == 2);
}

TEST_CASE("gap_rational_relation examples") {
  const auto equal = gap_rational_relation({2.0, 2.0, 2.0}, 10, 1e-9);
  REQUIRE(equal.has_value());
  CHECK(*equal == std::vector<long>{1, -1, 0});
  CHECK(!gap_rational_relation({1.0, std::sqrt(2.0)}, 50, 1e-9).has_value());
  const auto third = gap_rational_relation({1.0, 1.0 / 3.0}, 10, 1e-12);
  REQUIRE(third.has_value());
  CHECK(*third == std::vector<long>{1, -3});
  // Exhaustive oracle against the lattice search on the same inputs.
  const auto lat = gap_rational_relation({1.0, 1.0 / 3.0}, 10, 1e-12, RelationSearch::lattice);
  REQUIRE(lat.has_value());
  CHECK(*lat == std::vector<long>{1, -3});
  CHECK(!gap_rational_relation({1.0, std::sqrt(2.0)}, 50, 1e-9, RelationSearch::lattice).has_value());
  // 6 gaps goes to the lattice path.
  const std::vector<double> g6{std::sqrt(2.0), std::sqrt(3.0), std::sqrt(5.0), std::sqrt(7.0),
                               std::sqrt(2.0) + 2 * std::sqrt(3.0), std::sqrt(11.0)};
  const auto r6 = gap_rational_relation(g6, 20, 1e-10);
  REQUIRE(r6.has_value());
  double s = 0.0;
  for (int i = 0; i < 6; ++i) s += (*r6)[i] * g6[i];
  CHECK(std::abs(s) < 1e-10);
  CHECK(code_of([] { gap_rational_relation({1.0, 2.0, 3.0, 4.0, 5.0}, 100, 1e-9, RelationSearch::exhaustive); }) ==
        ErrorCode::SearchBudgetExceeded);
}

TEST_CASE("perturbed_spectrum oracles") {
  const auto free = perturbed_spectrum(0.0, -1.0, 1.0, 0.0, 8, 16);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(free.gaps.eigenvalues[i] - (2 * i + 1)) < 1e-10);
  for (double g : free.gaps.gaps) CHECK(g == doctest::Approx(2.0).epsilon(1e-12));
  const auto rel = gap_rational_relation(std::vector<double>(free.gaps.gaps.begin(), free.gaps.gaps.begin() + 3), 5, 1e-9);
  REQUIRE(rel.has_value());

  const double mu = 1e-4;
  const auto small = perturbed_spectrum(mu, -1.0, 1.0, 0.0, 8, 32);
  const auto B = gaussian_coupling(-1.0, 1.0, 0.0, 8);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(small.gaps.eigenvalues[i] - (2 * i + 1 + mu * B.b(i, i))) < 1e-6);

  const auto strong = perturbed_spectrum(1.0, -1.0, 1.0, 0.0, 8, 40);
  for (std::size_t i = 0; i < strong.gaps.gaps.size(); ++i) {
    CHECK(strong.gaps.gaps[i] > 0.0);
    for (std::size_t j = 0; j < i; ++j) CHECK(std::abs(strong.gaps.gaps[i] - strong.gaps.gaps[j]) > 1e-6);
  }
  MESSAGE("mu = 1 gaps: " << strong.gaps.gaps[0] << " " << strong.gaps.gaps[1] << " " << strong.gaps.gaps[6]);
  CHECK(code_of([] { perturbed_spectrum(0.0, -1.0, 1.0, 0.0, 9, 16); }) == ErrorCode::InvalidArgument);
  // A narrow spike couples far up the ladder.
  CHECK(code_of([] { perturbed_spectrum(20.0, -50.0, 0.0, 0.0, 6, 12); }) == ErrorCode::TruncationNotConverged);
}

TEST_CASE("invariant_disc_check witness and counter-case") {
  ControlEnsemble ens;
  ens.count = 100;
  ens.amplitude = 1000.0;
  ens.max_intervals = 6;
  ens.duration = 2.0;
  ens.seed = 11;
  const auto inside = invariant_disc_check(0.5, ens, 2.0, 0.1);
  CHECK(inside.invariant);
  CHECK(inside.violations == 0);
  CHECK(inside.max_drift < 1e-6);
  CHECK(inside.crossings == 0);

  DiscOptions fine;
  fine.step = 1e-4;
  ControlEnsemble strong = ens;
  strong.count = 10;
  const auto outside = invariant_disc_check(0.5, strong, 2.0, 1.2, fine);
  CHECK(!outside.invariant);
  CHECK(outside.max_drift > 1e-3);
  CHECK(outside.crossings > 0);

  ControlEnsemble none = ens;
  none.amplitude = 0.0;
  none.count = 4;
  const auto rotation = invariant_disc_check(0.5, none, 2.0, 1.7);
  CHECK(rotation.max_drift < 1e-10);

  const auto serial = [&] {
    DiscOptions o;
    o.exec = Exec::serial;
    return invariant_disc_check(0.5, strong, 2.0, 1.2, o);
  }();
  const auto parallel = invariant_disc_check(0.5, strong, 2.0, 1.2);
  CHECK(serial.member_drift == parallel.member_drift);
}
