#include "sclab/spectral.hpp"

#include "sclab/error.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace sclab {
namespace {

// phi_0..phi_{n-1} at x by the three-term recurrence of the normalized functions.
void hermite_functions(double x, int n, double* out) {
  if (n <= 0) return;
  out[0] = std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x);
  if (n > 1) out[1] = std::sqrt(2.0) * x * out[0];
  for (int k = 1; k + 1 < n; ++k)
    out[k + 1] = std::sqrt(2.0 / (k + 1)) * x * out[k] - std::sqrt(static_cast<double>(k) / (k + 1)) * out[k - 1];
}

// Monomial coefficients of h_0..h_{n-1}.
std::vector<std::vector<double>> hermite_coefficients(int n) {
  std::vector<std::vector<double>> h(n);
  const double h0 = std::pow(M_PI, -0.25);
  h[0] = {h0};
  if (n > 1) h[1] = {0.0, std::sqrt(2.0) * h0};
  for (int k = 1; k + 1 < n; ++k) {
    std::vector<double> next(k + 2, 0.0);
    const double s = std::sqrt(2.0 / (k + 1)), r = std::sqrt(static_cast<double>(k) / (k + 1));
    for (int m = 0; m <= k; ++m) next[m + 1] += s * h[k][m];
    for (int m = 0; m < k; ++m) next[m] -= r * h[k - 1][m];
    h[k + 1] = std::move(next);
  }
  return h;
}

std::vector<std::pair<int, int>> upper_pairs(int N) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) pairs.emplace_back(i, j);
  return pairs;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(int i, int j) {
    i = find(i);
    j = find(j);
    if (i != j) parent[std::max(i, j)] = std::min(i, j);
  }
};

}  // namespace

GaussHermite GaussHermite::rule(int order) {
  require(order >= 1 && order <= 600, ErrorCode::InvalidArgument, "Gauss-Hermite order must be in [1, 600]");
  // Golub-Welsch for the nodes, a Newton polish on h_order, then Christoffel
  // weights 1 / sum h_m(x)^2 which stay accurate in the tails.
  Mat jacobi = Mat::Zero(order, order);
  for (int k = 1; k < order; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Mat> solver(jacobi, Eigen::EigenvaluesOnly);
  GaussHermite rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  std::vector<double> phi(order + 1);
  for (int k = 0; k < order; ++k) {
    double x = solver.eigenvalues()(k);
    for (int it = 0; it < 3; ++it) {
      hermite_functions(x, order + 1, phi.data());
      const double derivative = std::sqrt(2.0 * order) * phi[order - 1] - x * phi[order];
      if (derivative == 0.0) break;
      const double dx = phi[order] / derivative;
      x -= dx;
      if (std::abs(dx) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    hermite_functions(x, order, phi.data());
    double sum = 0.0;
    for (int m = 0; m < order; ++m) sum += phi[m] * phi[m];
    rule.nodes[k] = x;
    rule.weights[k] = std::exp(-x * x) / sum;
  }
  // Symmetrize so odd moments vanish exactly.
  for (int k = 0; k < order / 2; ++k) {
    const int m = order - 1 - k;
    const double x = 0.5 * (rule.nodes[m] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[m] + rule.weights[k]);
    rule.nodes[k] = -x;
    rule.nodes[m] = x;
    rule.weights[k] = rule.weights[m] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  return rule;
}

void hermite_polynomials(double x, int n, double* out) {
  if (n <= 0) return;
  out[0] = std::pow(M_PI, -0.25);
  if (n > 1) out[1] = std::sqrt(2.0) * x * out[0];
  for (int k = 1; k + 1 < n; ++k)
    out[k + 1] = std::sqrt(2.0 / (k + 1)) * x * out[k] - std::sqrt(static_cast<double>(k) / (k + 1)) * out[k - 1];
}

HermiteBasis HermiteBasis::make(int N, int order) {
  require(N >= 1, ErrorCode::InvalidArgument, "basis size must be positive");
  HermiteBasis basis;
  basis.N = N;
  basis.quadrature = GaussHermite::rule(std::max(order, 4 * N));
  return basis;
}

double HermiteBasis::phi(int n, double x) const {
  require(n >= 0, ErrorCode::InvalidArgument, "negative Hermite index");
  std::vector<double> v(n + 1);
  hermite_functions(x, n + 1, v.data());
  return v[n];
}

double HermiteBasis::orthonormality_defect() const {
  Mat gram = Mat::Zero(N, N);
  std::vector<double> h(N);
  const auto& q = quadrature;
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    hermite_polynomials(q.nodes[k], N, h.data());
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) gram(i, j) += q.weights[k] * h[i] * h[j];
  }
  return (gram - Mat::Identity(N, N)).cwiseAbs().maxCoeff();
}

double gaussian_moment(double a, double b, double c, int k) {
  require(a < 0.0, ErrorCode::QuadratureDivergence, "Gaussian moment needs a < 0");
  require(k >= 0, ErrorCode::InvalidArgument, "negative moment order");
  const double alpha = -a;
  double prev = 0.0;
  double cur = std::sqrt(M_PI / alpha) * std::exp(b * b / (4.0 * alpha) + c);
  for (int m = 0; m < k; ++m) {
    const double next = b / (2.0 * alpha) * cur + m / (2.0 * alpha) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

CouplingMatrix gaussian_coupling(double a, double b, double c, int N, int order, Exec exec) {
  require(std::isfinite(a) && std::isfinite(b) && std::isfinite(c), ErrorCode::InvalidArgument,
          "Gaussian parameters must be finite");
  require(a < 1.0, ErrorCode::QuadratureDivergence, "a >= 1: the integrand is not damped");
  require(N >= 1, ErrorCode::InvalidArgument, "basis size must be positive");
  // (1 - a) x^2 - b x = (1 - a)(x - mu)^2 - b^2 / (4 (1 - a)); x = mu + y / s.
  const double s = std::sqrt(1.0 - a);
  const double mu = b / (2.0 * (1.0 - a));
  const double log_prefactor = c + b * b / (4.0 * (1.0 - a)) - std::log(s);
  const GaussHermite rule = GaussHermite::rule(std::max(order, 4 * N));
  const std::size_t K = rule.nodes.size();

  // phi values and log-weights (w e^{z^2}) at the mapped nodes.
  Mat phi(K, N);
  std::vector<double> log_weight(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double y = rule.nodes[k], z = mu + y / s;
    std::vector<double> v(N);
    hermite_functions(z, N, v.data());
    for (int i = 0; i < N; ++i) phi(k, i) = v[i];
    log_weight[k] = std::log(rule.weights[k]) + z * z + log_prefactor;
  }
  const auto pairs = upper_pairs(N);
  CouplingMatrix out;
  out.b = Mat::Zero(N, N);
  out.a = a;
  out.bcoef = b;
  out.c = c;
  std::vector<double> values(pairs.size());
  for_each_index(exec, pairs.size(), [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double f = phi(k, i) * phi(k, j);
      if (f != 0.0) sum += std::exp(log_weight[k]) * f;
    }
    values[p] = sum;
  });
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    out.b(i, j) = out.b(j, i) = values[p];
  }
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      require(std::isfinite(out.b(i, j)), ErrorCode::QuadratureDivergence, "non-finite coupling entry");

  {
    const auto h = hermite_coefficients(std::min(N, 5));
    for (int i = 0; i < std::min(N, 5); ++i)
      for (int j = 0; j < std::min(N, 5) && i + j <= 4; ++j) {
        double exact = 0.0;
        for (std::size_t m = 0; m < h[i].size(); ++m)
          for (std::size_t n = 0; n < h[j].size(); ++n)
            if (h[i][m] * h[j][n] != 0.0) exact += h[i][m] * h[j][n] * gaussian_moment(a - 1.0, b, c, static_cast<int>(m + n));
        out.crosscheck_error = std::max(out.crosscheck_error, std::abs(exact - out.b(i, j)));
      }
  }
  return out;
}

CutoffCoupling cutoff_coupling(double a, double b, double c, double eps, int N, Exec exec) {
  require(eps >= 0.0 && std::isfinite(eps), ErrorCode::InvalidArgument, "cutoff eps must be finite and >= 0");
  CutoffCoupling out;
  out.b_hat = gaussian_coupling(a, b, c, N, 0, exec);
  out.b_hat.eps = eps;
  out.f = Mat::Zero(N, N);
  if (eps > 0.0) {
    const auto pairs = upper_pairs(N);
    std::vector<double> values(pairs.size());
    for_each_index(exec, pairs.size(), [&](std::size_t p) {
      const auto [i, j] = pairs[p];
      std::vector<double> v(N);
      auto integrand = [&](double x) {
        hermite_functions(x, std::max(i, j) + 1, v.data());
        return v[i] * v[j] * std::exp(a * x * x + b * x + c);
      };
      values[p] = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -eps, eps, 12, 1e-13);
    });
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [i, j] = pairs[p];
      out.f(i, j) = out.f(j, i) = values[p];
    }
  }
  out.b_hat.b -= out.f;
  return out;
}

Connectivity minor_connectivity(const Mat& B, int k, double zero_tol) {
  require(B.rows() == B.cols(), ErrorCode::InvalidArgument, "coupling matrix must be square");
  require(k >= 1 && k <= B.rows(), ErrorCode::InvalidArgument, "minor size must be in [1, N]");
  require(zero_tol >= 0.0, ErrorCode::InvalidArgument, "zero_tol must be >= 0");
  Connectivity out;
  out.threshold = zero_tol * B.cwiseAbs().maxCoeff();
  UnionFind uf(k);
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (std::abs(B(i, j)) > out.threshold || std::abs(B(j, i)) > out.threshold) uf.unite(i, j);
  std::vector<int> slot(k, -1);
  for (int i = 0; i < k; ++i) {
    const int root = uf.find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(out.components.size());
      out.components.emplace_back();
    }
    out.components[slot[root]].push_back(i);
  }
  out.connected = out.components.size() == 1;
  return out;
}

GapVector GapVector::from_eigenvalues(std::vector<double> ev) {
  std::sort(ev.begin(), ev.end());
  GapVector g;
  for (std::size_t i = 1; i < ev.size(); ++i) g.gaps.push_back(ev[i] - ev[i - 1]);
  g.eigenvalues = std::move(ev);
  return g;
}

namespace {

constexpr double kSearchBudget = 1e7;

std::optional<std::vector<long>> exhaustive_relation(const std::vector<double>& g, long bound, double precision) {
  const int n = static_cast<int>(g.size());
  const double candidates = std::pow(2.0 * bound + 1.0, n - 1);
  require(candidates <= kSearchBudget, ErrorCode::SearchBudgetExceeded,
          "exhaustive relation search needs " + std::to_string(candidates) + " candidates");
  std::optional<std::vector<long>> best;
  long best_norm = bound + 1;
  // First coefficient runs downward, the others upward; the last one is solved for.
  std::vector<long> l(n, 0);
  if (n > 1) l[0] = bound;
  for (int i = 1; i + 1 < n; ++i) l[i] = -bound;
  while (true) {
    double s = 0.0;
    long norm = 0;
    bool leading_positive = false, any = false;
    for (int i = 0; i + 1 < n; ++i) {
      s += l[i] * g[i];
      norm = std::max(norm, std::labs(l[i]));
      if (!any && l[i] != 0) {
        any = true;
        leading_positive = l[i] > 0;
      }
    }
    double last_real = g[n - 1] != 0.0 ? -s / g[n - 1] : 0.0;
    if (std::abs(last_real) <= bound + 0.5) {
      long last = std::lround(last_real);
      if (!any && last < 0) last = -last;
      const bool canonical = any ? leading_positive : last > 0;
      if (canonical && std::labs(last) <= bound && std::abs(s + last * g[n - 1]) < precision) {
        const long total = std::max(norm, std::labs(last));
        if (total < best_norm) {
          best_norm = total;
          std::vector<long> rel(l.begin(), l.end());
          rel[n - 1] = last;
          best = rel;
        }
      }
    }
    // The all-zero prefix still needs the last coefficient tried (s = 0 case).
    if (!any && g[n - 1] != 0.0 && std::abs(g[n - 1]) < precision && best_norm > 1) {
      std::vector<long> rel(n, 0);
      rel[n - 1] = 1;
      best = rel;
      best_norm = 1;
    }
    int i = n - 2;
    for (; i >= 1; --i) {
      if (l[i] < bound) {
        ++l[i];
        break;
      }
      l[i] = -bound;
    }
    if (i < 1) {
      if (n < 2 || l[0] == -bound) break;
      --l[0];
    }
  }
  return best;
}

// LLL on the rows of `basis` (delta = 0.99) in long double.
void lll_reduce(std::vector<std::vector<long double>>& basis) {
  const int n = static_cast<int>(basis.size());
  const int m = static_cast<int>(basis[0].size());
  auto dot = [m](const std::vector<long double>& u, const std::vector<long double>& v) {
    long double s = 0;
    for (int i = 0; i < m; ++i) s += u[i] * v[i];
    return s;
  };
  std::vector<std::vector<long double>> star(n, std::vector<long double>(m));
  std::vector<std::vector<long double>> mu(n, std::vector<long double>(n, 0));
  std::vector<long double> norm2(n);
  auto gram_schmidt = [&]() {
    for (int i = 0; i < n; ++i) {
      star[i] = basis[i];
      for (int j = 0; j < i; ++j) {
        mu[i][j] = norm2[j] > 0 ? dot(basis[i], star[j]) / norm2[j] : 0;
        for (int t = 0; t < m; ++t) star[i][t] -= mu[i][j] * star[j][t];
      }
      norm2[i] = dot(star[i], star[i]);
    }
  };
  gram_schmidt();
  int k = 1, guard = 0;
  while (k < n && guard++ < 100000) {
    for (int j = k - 1; j >= 0; --j) {
      const long double q = std::round(mu[k][j]);
      if (q != 0) {
        for (int t = 0; t < m; ++t) basis[k][t] -= q * basis[j][t];
        gram_schmidt();
      }
    }
    if (norm2[k] >= (0.99L - mu[k][k - 1] * mu[k][k - 1]) * norm2[k - 1]) {
      ++k;
    } else {
      std::swap(basis[k], basis[k - 1]);
      gram_schmidt();
      k = std::max(k - 1, 1);
    }
  }
}

std::optional<std::vector<long>> lattice_relation(const std::vector<double>& g, long bound, double precision) {
  const int n = static_cast<int>(g.size());
  const long double scale = 1.0L / precision;
  std::vector<std::vector<long double>> basis(n, std::vector<long double>(n + 1, 0));
  for (int i = 0; i < n; ++i) {
    basis[i][i] = 1;
    basis[i][n] = scale * g[i];
  }
  if (n > 1) lll_reduce(basis);
  std::optional<std::vector<long>> best;
  long best_norm = bound + 1;
  for (const auto& row : basis) {
    std::vector<long> rel(n);
    long norm = 0;
    bool integral = true;
    for (int i = 0; i < n; ++i) {
      const long double r = std::round(row[i]);
      if (std::abs(row[i] - r) > 1e-6L || std::abs(r) > 1e15L) integral = false;
      rel[i] = static_cast<long>(r);
      norm = std::max(norm, std::labs(rel[i]));
    }
    if (!integral || norm == 0 || norm > bound) continue;
    long double s = 0;
    for (int i = 0; i < n; ++i) s += rel[i] * static_cast<long double>(g[i]);
    if (std::abs(s) >= precision) continue;
    const auto lead = std::find_if(rel.begin(), rel.end(), [](long v) { return v != 0; });
    if (*lead < 0)
      for (auto& v : rel) v = -v;
    if (norm < best_norm) {
      best_norm = norm;
      best = rel;
    }
  }
  return best;
}

}  // namespace

std::optional<std::vector<long>> gap_rational_relation(const std::vector<double>& gaps, long coeff_bound,
                                                       double precision, RelationSearch method) {
  require(!gaps.empty(), ErrorCode::InvalidArgument, "no gaps given");
  for (double g : gaps) require(std::isfinite(g), ErrorCode::InvalidArgument, "gaps must be finite");
  require(coeff_bound >= 1, ErrorCode::InvalidArgument, "coefficient bound must be >= 1");
  require(precision > 0.0, ErrorCode::InvalidArgument, "precision must be positive");
  if (method == RelationSearch::automatic)
    method = gaps.size() <= 4 && coeff_bound <= 100 ? RelationSearch::exhaustive : RelationSearch::lattice;
  if (method == RelationSearch::exhaustive) return exhaustive_relation(gaps, coeff_bound, precision);
  return lattice_relation(gaps, coeff_bound, precision);
}

namespace {

std::vector<double> truncated_spectrum(double mu, double a, double b, double c, int size) {
  Mat H = Mat::Zero(size, size);
  if (mu != 0.0) H = mu * gaussian_coupling(a, b, c, size).b;
  for (int i = 0; i < size; ++i) H(i, i) += 2.0 * i + 1.0;
  Eigen::SelfAdjointEigenSolver<Mat> solver(H, Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, ErrorCode::TruncationNotConverged, "eigensolver failed");
  const Vec& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

}  // namespace

PerturbedSpectrum perturbed_spectrum(double mu, double a, double b, double c, int N, int N_big) {
  require(N >= 2, ErrorCode::InvalidArgument, "need at least two eigenvalues");
  require(2 * N <= N_big, ErrorCode::InvalidArgument, "truncation guard: N must be <= N_big / 2");
  require(std::isfinite(mu), ErrorCode::InvalidArgument, "mu must be finite");
  const auto coarse = truncated_spectrum(mu, a, b, c, N_big);
  const auto fine = truncated_spectrum(mu, a, b, c, 2 * N_big);
  PerturbedSpectrum out;
  out.N_big = N_big;
  for (int i = 0; i < N; ++i) out.max_shift = std::max(out.max_shift, std::abs(fine[i] - coarse[i]));
  require(out.max_shift < 1e-8, ErrorCode::TruncationNotConverged,
          "eigenvalues moved by " + std::to_string(out.max_shift * 1e8) + "e-8" + " when doubling N_big");
  out.gaps = GapVector::from_eigenvalues(std::vector<double>(fine.begin(), fine.begin() + N));
  return out;
}

DiscReport invariant_disc_check(double eps, const ControlEnsemble& ensemble, double horizon, double r0,
                                const DiscOptions& opt) {
  require(horizon > 0.0 && r0 >= 0.0, ErrorCode::InvalidArgument, "horizon must be positive and r0 >= 0");
  require(opt.step > 0.0 && opt.angles >= 1 && opt.event_tol > 0.0, ErrorCode::InvalidArgument,
          "invalid disc options");
  ensemble.validate();
  const int members = ensemble.size();
  DiscReport report;
  report.member_drift.assign(members, 0.0);
  std::vector<long> crossings(members, 0);

  for_each_index(opt.exec, members, [&](std::size_t m) {
    const ControlSignal u = ensemble.member(static_cast<int>(m));
    std::vector<double> cuts{0.0};
    for (double t : u.breakpoints)
      if (t > 0.0 && t < horizon) cuts.push_back(t);
    cuts.push_back(horizon);
    double drift = 0.0;
    for (int k = 0; k < opt.angles; ++k) {
      const double theta = 2.0 * M_PI * k / opt.angles;
      Eigen::Vector2d y(r0 * std::cos(theta), r0 * std::sin(theta));
      auto inside = [&](const Eigen::Vector2d& s) { return s(0) > eps; };
      for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
        const double t0 = cuts[seg], t1 = cuts[seg + 1];
        const double uval = u.value_at(0.5 * (t0 + t1))(0);
        bool region = inside(y) || (y(0) == eps && y(1) > 0.0);
        auto rhs = [&](const Eigen::Vector2d& s) {
          Eigen::Vector2d d(2.0 * s(1), -2.0 * s(0));
          if (region) d(1) -= uval * (2.0 * opt.a * s(0) + opt.b) * std::exp(opt.a * s(0) * s(0) + opt.b * s(0) + opt.c);
          return d;
        };
        auto step = [&](const Eigen::Vector2d& s, double h) {
          const Eigen::Vector2d k1 = rhs(s), k2 = rhs(s + 0.5 * h * k1), k3 = rhs(s + 0.5 * h * k2),
                                k4 = rhs(s + h * k3);
          return Eigen::Vector2d(s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        };
        double t = t0;
        while (t < t1 - 1e-15) {
          const double h = std::min(opt.step, t1 - t);
          Eigen::Vector2d next = step(y, h);
          double taken = h;
          if (inside(next) != region) {
            double lo = 0.0, hi = h;
            while (hi - lo > opt.event_tol) {
              const double mid = 0.5 * (lo + hi);
              if (inside(step(y, mid)) == region) lo = mid;
              else hi = mid;
            }
            next = step(y, hi);
            taken = hi;
            region = !region;
            ++crossings[m];
          }
          y = next;
          t += taken;
          require(y.allFinite() && y.cwiseAbs().maxCoeff() < kOverflowGuard, ErrorCode::TrajectoryEscape,
                  "disc trajectory escaped");
          drift = std::max(drift, std::abs(y.norm() - r0));
        }
      }
    }
    report.member_drift[m] = drift;
  });
  for (int m = 0; m < members; ++m) {
    report.max_drift = std::max(report.max_drift, report.member_drift[m]);
    if (report.member_drift[m] >= opt.drift_tol) ++report.violations;
    report.crossings += crossings[m];
  }
  report.invariant = report.violations == 0;
  return report;
}

}  // namespace sclab
