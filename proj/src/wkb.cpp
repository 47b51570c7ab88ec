#include "sclab/wkb.hpp"

#include "sclab/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace sclab {

TimePotential TimePotential::stationary(PotentialField V) {
  TimePotential tp;
  tp.value = [V](double, const Vec& x) { return V(x); };
  tp.gradient = [V](double, const Vec& x) { return V.grad(x); };
  tp.hessian = [V](double, const Vec& x) { return V.hess(x); };
  return tp;
}

TimePotential TimePotential::controlled(PotentialField V, PotentialField W, ControlSignal u) {
  u.validate();
  require(u.channels() == 1, ErrorCode::InvalidArgument, "controlled potential takes one channel");
  TimePotential tp;
  tp.value = [V, W, u](double t, const Vec& x) { return V(x) + u.value_at(t)[0] * W(x); };
  tp.gradient = [V, W, u](double t, const Vec& x) -> Vec { return V.grad(x) + u.value_at(t)[0] * W.grad(x); };
  tp.hessian = [V, W, u](double t, const Vec& x) -> Mat { return V.hess(x) + u.value_at(t)[0] * W.hess(x); };
  tp.breakpoints.assign(u.breakpoints.begin() + 1, u.breakpoints.end() - 1);
  tp.piecewise_constant = true;
  return tp;
}

std::size_t SeedGrid::size() const {
  std::size_t n = 1;
  for (int c : counts) n *= static_cast<std::size_t>(c);
  return n;
}

Vec SeedGrid::point(std::size_t index) const {
  Vec x(dimension());
  for (int a = dimension() - 1; a >= 0; --a) {
    const int i = static_cast<int>(index % static_cast<std::size_t>(counts[a]));
    index /= static_cast<std::size_t>(counts[a]);
    x[a] = lower[a] + i * spacing(a);
  }
  return x;
}

void SeedGrid::validate() const {
  require(dimension() >= 1 && lower.size() == counts.size() && upper.size() == counts.size(),
          ErrorCode::InvalidArgument, "seed grid description is inconsistent");
  for (int a = 0; a < dimension(); ++a) {
    require(counts[a] >= 2, ErrorCode::InvalidArgument, "seed grid needs two points per axis");
    require(std::isfinite(lower[a]) && std::isfinite(upper[a]) && upper[a] > lower[a], ErrorCode::InvalidArgument,
            "seed box must be finite and nonempty");
  }
}

namespace {

struct Layout {
  int n;
  int S() const { return 2 * n; }
  int X() const { return 2 * n + 1; }
  int P() const { return 2 * n + 1 + n * n; }
  int L() const { return 2 * n + 1 + 2 * n * n; }
  int size() const { return L() + 1; }
  int checked() const { return L(); }  // entries covered by the halving check, in blocks
};

// Below this |det X| the transport integrand is frozen; the integral is only
// reported while |J| stays well above the caustic guard.
constexpr double kFreeze = 1e-3;
constexpr double kTransportFloor = 0.01;

double log_det_gradient_dot(const ChartSpace& space, const Vec& x, const Vec& v) {
  if (space.is_flat()) return 0.0;
  const Mat g = space.cometric(x);
  const auto dg = space.cometric_derivative(x);
  const Eigen::LDLT<Mat> ldlt(g);
  double s = 0.0;
  for (int k = 0; k < static_cast<int>(x.size()); ++k) s += v[k] * ldlt.solve(dg[k]).trace();
  return s;
}

Rhs fan_rhs(const ChartSpace& space, const TimePotential& V, double a, double b) {
  const int n = space.dimension();
  const Layout L{n};
  return [&space, &V, a, b, n, L](double t, const Vec& y, Vec& dy) {
    const double te = V.piecewise_constant ? 0.5 * (a + b) : t;
    const Vec x = y.head(n);
    const Vec p = y.segment(n, n);
    Vec xdot, pdot;
    kinetic_rhs(space, x, p, xdot, pdot);
    pdot -= V.gradient(te, x);
    dy.head(n) = xdot;
    dy.segment(n, n) = pdot;
    dy[L.S()] = 0.5 * p.dot(xdot) - V.value(te, x);
    const Mat A = phase_jacobian(space, x, p, V.hessian(te, x));
    const Eigen::Map<const Mat> X(y.data() + L.X(), n, n);
    const Eigen::Map<const Mat> P(y.data() + L.P(), n, n);
    const Mat Xdot = A.topLeftCorner(n, n) * X + A.topRightCorner(n, n) * P;
    Eigen::Map<Mat>(dy.data() + L.X(), n, n) = Xdot;
    Eigen::Map<Mat>(dy.data() + L.P(), n, n) = A.bottomLeftCorner(n, n) * X + A.bottomRightCorner(n, n) * P;
    const double det = X.determinant();
    if (std::abs(det) > kFreeze) {
      dy[L.L()] = (Xdot * X.inverse()).trace() - 0.5 * log_det_gradient_dot(space, x, xdot);
    } else {
      dy[L.L()] = 0.0;
    }
  };
}

double metric_jacobian(const ChartSpace& space, const Vec& x0, const Vec& state) {
  const int n = space.dimension();
  const Layout L{n};
  const double det = Eigen::Map<const Mat>(state.data() + L.X(), n, n).determinant();
  if (space.is_flat()) return det;
  return det * std::sqrt(space.cometric(x0).determinant() / space.cometric(state.head(n)).determinant());
}

std::vector<double> sample_times(const TimePotential& V, double T, double step) {
  std::vector<double> cuts{0.0};
  for (double b : V.breakpoints)
    if (b > 0.0 && b < T) cuts.push_back(b);
  cuts.push_back(T);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> times{0.0};
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const int m = steps_for(cuts[k + 1] - cuts[k], step);
    for (int j = 1; j <= m; ++j) times.push_back(j == m ? cuts[k + 1] : cuts[k] + (cuts[k + 1] - cuts[k]) * j / m);
  }
  return times;
}

std::vector<Vec> run_seed(const ChartSpace& space, const TimePotential& V, const std::vector<double>& times,
                          const Vec& y0, int substeps) {
  std::vector<Vec> out{y0};
  out.reserve(times.size());
  Vec y = y0;
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    y = integrate_fixed(fan_rhs(space, V, times[k], times[k + 1]), times[k], y, times[k + 1], substeps);
    out.push_back(y);
  }
  return out;
}

}  // namespace

Vec CharacteristicFan::x(std::size_t seed, std::size_t k) const { return states[seed][k].head(dimension()); }
Vec CharacteristicFan::p(std::size_t seed, std::size_t k) const {
  return states[seed][k].segment(dimension(), dimension());
}
double CharacteristicFan::S(std::size_t seed, std::size_t k) const { return states[seed][k][Layout{dimension()}.S()]; }
Mat CharacteristicFan::X(std::size_t seed, std::size_t k) const {
  const int n = dimension();
  return Eigen::Map<const Mat>(states[seed][k].data() + Layout{n}.X(), n, n);
}

Vec CharacteristicFan::state_at(std::size_t seed, double t) const {
  require(t >= 0.0 && t <= horizon(), ErrorCode::InvalidArgument, "time outside the fan horizon");
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - times.begin()) - 1));
  if (k + 1 >= times.size()) k = times.size() - 2;
  if (t == times[k]) return states[seed][k];
  if (t == times[k + 1]) return states[seed][k + 1];
  const double span = times[k + 1] - times[k];
  const int steps = std::max(1, static_cast<int>(std::ceil(substeps[seed] * (t - times[k]) / span - 1e-9)));
  return integrate_fixed(fan_rhs(space, V, times[k], times[k + 1]), times[k], states[seed][k], t, steps);
}

double CharacteristicFan::jacobian_of(std::size_t seed, const Vec& state) const {
  return metric_jacobian(space, seeds.point(seed), state);
}

CharacteristicFan shoot_characteristics(const ChartSpace& space, const PotentialField& S0, const TimePotential& V,
                                        const SeedGrid& seeds, double T, double step, double hbar, Exec exec) {
  seeds.validate();
  require(seeds.dimension() == space.dimension(), ErrorCode::InvalidChart, "seed grid dimension does not match");
  require(T > 0.0 && step > 0.0, ErrorCode::InvalidArgument, "horizon and step must be positive");
  require(hbar > 0.0, ErrorCode::InvalidArgument, "hbar must be positive");
  require(static_cast<bool>(V.value) && static_cast<bool>(V.gradient) && static_cast<bool>(V.hessian),
          ErrorCode::InvalidArgument, "time potential is incomplete");
  const int n = space.dimension();
  const Layout L{n};

  CharacteristicFan fan;
  fan.space = space;
  fan.V = V;
  fan.seeds = seeds;
  fan.hbar = hbar;
  fan.times = sample_times(V, T, step);
  const std::size_t count = seeds.size();
  fan.states.resize(count);
  fan.substeps.resize(count);
  fan.J.resize(count);
  fan.transport_log.resize(count);

  for_each_index(exec, count, [&](std::size_t s) {
    const Vec x0 = seeds.point(s);
    Vec y0 = Vec::Zero(L.size());
    y0.head(n) = x0;
    y0.segment(n, n) = S0.grad(x0);
    y0[L.S()] = S0(x0);
    Eigen::Map<Mat>(y0.data() + L.X(), n, n).setIdentity();
    Eigen::Map<Mat>(y0.data() + L.P(), n, n) = S0.hess(x0);

    int m = 1;
    std::vector<Vec> coarse = run_seed(fan.space, fan.V, fan.times, y0, m);
    bool accepted = false;
    for (int r = 0; r <= 8; ++r) {
      std::vector<Vec> fine = run_seed(fan.space, fan.V, fan.times, y0, 2 * m);
      double mismatch = 0.0;
      for (std::size_t k = 0; k < fine.size(); ++k)
        mismatch = std::max({mismatch, relative_mismatch(coarse[k].head(L.S()), fine[k].head(L.S())),
                             relative_mismatch(coarse[k].segment(L.X(), L.checked() - L.X()),
                                               fine[k].segment(L.X(), L.checked() - L.X())),
                             relative_mismatch(coarse[k].segment(L.S(), 1), fine[k].segment(L.S(), 1))});
      m *= 2;
      coarse = std::move(fine);
      if (mismatch < kHalvingTolerance) {
        accepted = true;
        break;
      }
    }
    if (!accepted) fail(ErrorCode::StepTooCoarse, "characteristic did not pass the step-halving check");

    auto& J = fan.J[s];
    auto& lg = fan.transport_log[s];
    J.resize(coarse.size());
    lg.resize(coarse.size());
    bool near_caustic = false;
    for (std::size_t k = 0; k < coarse.size(); ++k) {
      J[k] = metric_jacobian(fan.space, x0, coarse[k]);
      if (std::abs(J[k]) < kTransportFloor) near_caustic = true;
      lg[k] = near_caustic ? std::numeric_limits<double>::quiet_NaN() : coarse[k][L.L()];
    }
    fan.substeps[s] = m;
    fan.states[s] = std::move(coarse);
  });
  return fan;
}

std::vector<double> first_conjugate_time(const CharacteristicFan& fan, Exec exec) {
  std::vector<double> out(fan.seed_count(), fan.horizon());
  for_each_index(exec, fan.seed_count(), [&](std::size_t s) {
    const auto& J = fan.J[s];
    const auto& t = fan.times;
    const auto Jat = [&](double tau) { return fan.jacobian_of(s, fan.state_at(s, tau)); };
    for (std::size_t k = 0; k + 1 < J.size(); ++k) {
      if (J[k] == 0.0) {
        out[s] = t[k];
        return;
      }
      if ((J[k] > 0.0) != (J[k + 1] > 0.0)) {
        if (J[k + 1] == 0.0) {
          out[s] = t[k + 1];
          return;
        }
        double lo = t[k], hi = t[k + 1];
        const bool lo_positive = J[k] > 0.0;
        while (hi - lo > 1e-10) {
          const double mid = 0.5 * (lo + hi);
          const double v = Jat(mid);
          if (v == 0.0) {
            lo = hi = mid;
            break;
          }
          ((v > 0.0) == lo_positive ? lo : hi) = mid;
        }
        out[s] = 0.5 * (lo + hi);
        return;
      }
      // A double root touches zero without a sign change.
      if (k > 0 && std::abs(J[k]) < kCausticGuard && std::abs(J[k]) <= std::abs(J[k - 1]) &&
          std::abs(J[k]) <= std::abs(J[k + 1])) {
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = t[k - 1], b = t[k + 1];
        double c = b - g * (b - a), d = a + g * (b - a);
        double fc = std::abs(Jat(c)), fd = std::abs(Jat(d));
        while (b - a > 1e-10) {
          if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = std::abs(Jat(c));
          } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = std::abs(Jat(d));
          }
        }
        const double tm = 0.5 * (a + b);
        if (std::abs(Jat(tm)) < 1e-8) {
          out[s] = tm;
          return;
        }
      }
    }
  });
  return out;
}

namespace {

constexpr int kInterpPoints = 6;

// Tensor Lagrange interpolation of per-seed vectors at a parameter point.
// Returns false when x0 leaves the seed box by more than a rounding margin.
bool interpolate(const SeedGrid& seeds, const std::vector<Vec>& values, const Vec& x0, Vec& out) {
  const int d = seeds.dimension();
  std::vector<int> start(d), q(d);
  std::vector<std::array<double, kInterpPoints>> w(d);
  for (int a = 0; a < d; ++a) {
    const int N = seeds.counts[a];
    const double s = (x0[a] - seeds.lower[a]) / seeds.spacing(a);
    if (s < -1e-9 || s > N - 1 + 1e-9) return false;
    q[a] = std::min(kInterpPoints, N);
    start[a] = std::clamp(static_cast<int>(std::floor(s)) - (q[a] / 2 - 1), 0, N - q[a]);
    for (int j = 0; j < q[a]; ++j) {
      double wj = 1.0;
      for (int l = 0; l < q[a]; ++l)
        if (l != j) wj *= (s - (start[a] + l)) / static_cast<double>(j - l);
      w[a][j] = wj;
    }
  }
  out = Vec::Zero(values.front().size());
  std::vector<int> idx(d, 0);
  while (true) {
    double weight = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < d; ++a) {
      weight *= w[a][idx[a]];
      flat = flat * static_cast<std::size_t>(seeds.counts[a]) + (start[a] + idx[a]);
    }
    out += weight * values[flat];
    int a = d - 1;
    while (a >= 0 && ++idx[a] == q[a]) idx[a--] = 0;
    if (a < 0) break;
  }
  return true;
}

// Layout of the interpolated record: x_t (n), S, p (n), J, X (n^2).
struct Transported {
  std::vector<Vec> records;
  bool caustic = false;
};

Transported transport(const CharacteristicFan& fan, double t, const std::optional<BoxRegion>& region, Exec exec) {
  const int n = fan.dimension();
  const Layout L{n};
  Transported tr;
  tr.records.resize(fan.seed_count());
  std::vector<char> bad(fan.seed_count(), 0);
  const auto hit = std::find_if(fan.times.begin(), fan.times.end(), [t](double s) { return std::abs(s - t) < 1e-13; });
  for_each_index(exec, fan.seed_count(), [&](std::size_t s) {
    const Vec y = hit != fan.times.end() ? fan.states[s][hit - fan.times.begin()] : fan.state_at(s, t);
    const double J = fan.jacobian_of(s, y);
    Vec rec(2 * n + 2 + n * n);
    rec.head(n) = y.head(n);
    rec[n] = y[L.S()];
    rec.segment(n + 1, n) = y.segment(n, n);
    rec[2 * n + 1] = J;
    rec.tail(n * n) = y.segment(L.X(), n * n);
    tr.records[s] = rec;
    if (J < kCausticGuard && (!region || region->contains(fan.space.wrap(y.head(n))) || region->contains(y.head(n))))
      bad[s] = 1;
  });
  tr.caustic = std::any_of(bad.begin(), bad.end(), [](char b) { return b != 0; });
  return tr;
}

}  // namespace

std::vector<cplx> WKBField::wave() const {
  std::vector<cplx> psi(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (valid[i]) psi[i] = a[i] * std::exp(cplx(0.0, S[i] / hbar));
  return psi;
}

std::size_t WKBField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

WKBField wkb_field(const CharacteristicFan& fan, const PotentialField& a0, const UniformGrid& grid, double t,
                   const WKBFieldOptions& options) {
  grid.validate();
  require(fan.space.is_flat(), ErrorCode::InvalidChart, "field assembly needs a flat chart");
  require(grid.dimension() == fan.dimension(), ErrorCode::GridMismatch, "grid dimension does not match the fan");
  require(t >= 0.0 && t <= fan.horizon(), ErrorCode::InvalidArgument, "time outside the fan horizon");
  const int n = fan.dimension();
  const Transported tr = transport(fan, t, options.region, options.exec);
  if (tr.caustic) fail(ErrorCode::CausticReached, "a seed has |J| below the caustic guard at t=" + std::to_string(t));

  // Periodic images of a grid point that may match the transported seeds.
  std::vector<Vec> shifts{Vec::Zero(n)};
  for (int ax = 0; ax < n; ++ax) {
    if (!fan.space.is_periodic(ax)) continue;
    const std::size_t m = shifts.size();
    for (int sgn : {-1, 1})
      for (std::size_t j = 0; j < m; ++j) {
        Vec v = shifts[j];
        v[ax] += sgn * fan.space.period(ax);
        shifts.push_back(v);
      }
  }
  double h_seed = 0.0;
  for (int ax = 0; ax < n; ++ax) h_seed = std::max(h_seed, fan.seeds.spacing(ax));

  WKBField f;
  f.grid = grid;
  f.t = t;
  f.hbar = fan.hbar;
  f.S.assign(grid.size(), 0.0);
  f.a.assign(grid.size(), 0.0);
  f.grad_S.assign(n, std::vector<double>(grid.size(), 0.0));
  f.valid.assign(grid.size(), 0);

  for_each_index(options.exec, grid.size(), [&](std::size_t i) {
    const Vec y0 = grid.point(i);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_seed = 0;
    Vec y = y0;
    for (const Vec& sh : shifts) {
      const Vec ys = y0 + sh;
      for (std::size_t s = 0; s < tr.records.size(); ++s) {
        const double dist = (tr.records[s].head(n) - ys).lpNorm<Eigen::Infinity>();
        if (dist < best) {
          best = dist;
          best_seed = s;
          y = ys;
        }
      }
    }
    if (options.region && !options.region->contains(y)) return;
    Vec x0 = fan.seeds.point(best_seed);
    Vec rec;
    bool converged = false;
    for (int it = 0; it < 60; ++it) {
      if (!interpolate(fan.seeds, tr.records, x0, rec)) return;
      const Vec r = rec.head(n) - y;
      if (r.lpNorm<Eigen::Infinity>() < 1e-12 * (1.0 + y.lpNorm<Eigen::Infinity>())) {
        converged = true;
        break;
      }
      const Mat X = Eigen::Map<const Mat>(rec.data() + 2 * n + 2, n, n);
      Vec dx = -X.partialPivLu().solve(r);
      const double len = dx.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(len)) return;
      if (len > 2.0 * h_seed) dx *= 2.0 * h_seed / len;
      x0 += dx;
    }
    if (!converged) return;
    const double J = rec[2 * n + 1];
    if (!(J >= kCausticGuard)) return;
    f.S[i] = rec[n];
    for (int ax = 0; ax < n; ++ax) f.grad_S[ax][i] = rec[n + 1 + ax];
    f.a[i] = a0(x0) / std::sqrt(J);
    f.valid[i] = std::isfinite(f.a[i]) && std::isfinite(f.S[i]) ? 1 : 0;
  });
  return f;
}

BumpValue bump(double s) {
  BumpValue b;
  if (std::abs(s) >= 1.0) return b;
  const double q = 1.0 - s * s;
  b.f = std::exp(1.0 - 1.0 / q);
  b.df = b.f * (-2.0 * s / (q * q));
  b.d2f = b.f * (4.0 * s * s / (q * q * q * q) - 2.0 / (q * q) - 8.0 * s * s / (q * q * q));
  return b;
}

CutoffFunction CutoffFunction::box(std::vector<double> lower, std::vector<double> upper) {
  require(!lower.empty() && lower.size() == upper.size(), ErrorCode::InvalidArgument, "cutoff box is inconsistent");
  for (std::size_t a = 0; a < lower.size(); ++a)
    require(std::isfinite(lower[a]) && std::isfinite(upper[a]) && upper[a] > lower[a], ErrorCode::InvalidArgument,
            "cutoff box must be finite and nonempty");
  CutoffFunction c;
  c.dimension_ = static_cast<int>(lower.size());
  c.lower_ = std::move(lower);
  c.upper_ = std::move(upper);
  return c;
}

CutoffFunction CutoffFunction::unit(int dimension) {
  CutoffFunction c;
  c.dimension_ = dimension;
  c.unit_ = true;
  return c;
}

namespace {

std::vector<BumpValue> factors(const std::vector<double>& lo, const std::vector<double>& hi, const Vec& x) {
  std::vector<BumpValue> out(lo.size());
  for (std::size_t a = 0; a < lo.size(); ++a) {
    const double half = 0.5 * (hi[a] - lo[a]);
    const double s = (x[a] - 0.5 * (lo[a] + hi[a])) / half;
    out[a] = bump(s);
    out[a].df /= half;
    out[a].d2f /= half * half;
  }
  return out;
}

}  // namespace

double CutoffFunction::value(const Vec& x) const {
  if (unit_) return 1.0;
  double v = 1.0;
  for (const auto& b : factors(lower_, upper_, x)) v *= b.f;
  return v;
}

Vec CutoffFunction::gradient(const Vec& x) const {
  Vec g = Vec::Zero(dimension_);
  if (unit_) return g;
  const auto fs = factors(lower_, upper_, x);
  for (int a = 0; a < dimension_; ++a) {
    double v = fs[a].df;
    for (int b = 0; b < dimension_; ++b)
      if (b != a) v *= fs[b].f;
    g[a] = v;
  }
  return g;
}

double CutoffFunction::laplacian(const Vec& x) const {
  if (unit_) return 0.0;
  const auto fs = factors(lower_, upper_, x);
  double lap = 0.0;
  for (int a = 0; a < dimension_; ++a) {
    double v = fs[a].d2f;
    for (int b = 0; b < dimension_; ++b)
      if (b != a) v *= fs[b].f;
    lap += v;
  }
  return lap;
}

bool CutoffFunction::positive_at(const Vec& x) const {
  if (unit_) return true;
  for (int a = 0; a < dimension_; ++a)
    if (!(x[a] > lower_[a] && x[a] < upper_[a])) return false;
  return true;
}

std::vector<cplx> wkb_residual(const WKBField& field, const CutoffFunction& chi, cplx global_phase) {
  const UniformGrid& grid = field.grid;
  require(chi.dimension() == grid.dimension(), ErrorCode::GridMismatch, "cutoff dimension does not match the grid");
  const std::size_t N = grid.size();
  std::vector<char> support(N, 0);
  for (std::size_t i = 0; i < N; ++i) {
    if (!chi.positive_at(grid.point(i))) continue;
    support[i] = 1;
    bool ok = field.valid[i] != 0;
    for (int ax = 0; ax < grid.dimension() && ok; ++ax)
      for (int k = -kStencilRadius; k <= kStencilRadius && ok; ++k) ok = field.valid[grid.neighbour(i, ax, k)] != 0;
    if (!ok) fail(ErrorCode::MaskViolation, "cutoff support exceeds the valid WKB mask");
  }
  const double hb = field.hbar;
  const auto lap_a = laplacian_fd(grid, field.a);
  std::vector<std::vector<double>> grad_a;
  for (int ax = 0; ax < grid.dimension(); ++ax) grad_a.push_back(derivative_fd(grid, field.a, ax));
  std::vector<cplx> r(N);
  for (std::size_t i = 0; i < N; ++i) {
    if (!support[i]) continue;
    const Vec x = grid.point(i);
    const cplx phase = std::exp(cplx(0.0, field.S[i] / hb));
    const cplx psi = field.a[i] * phase;
    const Vec gchi = chi.gradient(x);
    cplx term = chi.value(x) * phase * (0.5 * lap_a[i]) + 0.5 * psi * chi.laplacian(x);
    for (int ax = 0; ax < grid.dimension(); ++ax)
      term += gchi[ax] * cplx(grad_a[ax][i], field.a[i] * field.grad_S[ax][i] / hb) * phase;
    r[i] = hb * hb * term * global_phase;
  }
  return r;
}

double duhamel_delta(const std::vector<double>& norms, double dt) {
  require(dt >= 0.0, ErrorCode::InvalidArgument, "sample spacing must be nonnegative");
  if (norms.size() < 2) return 0.0;
  double s = 0.5 * (norms.front() + norms.back());
  for (std::size_t k = 1; k + 1 < norms.size(); ++k) s += norms[k];
  return s * dt;
}

PdeDefect wkb_pde_defect(const CharacteristicFan& fan, const PotentialField& a0, const UniformGrid& grid, double t,
                         double dt, const WKBFieldOptions& options) {
  require(dt > 0.0 && t - dt >= 0.0 && t + dt <= fan.horizon(), ErrorCode::InvalidArgument,
          "time stencil leaves the fan horizon");
  const WKBField lo = wkb_field(fan, a0, grid, t - dt, options);
  const WKBField mid = wkb_field(fan, a0, grid, t, options);
  const WKBField hi = wkb_field(fan, a0, grid, t + dt, options);
  const auto psi_lo = lo.wave(), psi = mid.wave(), psi_hi = hi.wave();
  const auto lap_psi = laplacian_fd(grid, psi);
  const auto lap_a = laplacian_fd(grid, mid.a);
  const double hb = fan.hbar;
  PdeDefect out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    bool ok = lo.valid[i] && hi.valid[i];
    for (int ax = 0; ax < grid.dimension() && ok; ++ax)
      for (int k = -kStencilRadius; k <= kStencilRadius && ok; ++k) ok = mid.valid[grid.neighbour(i, ax, k)] != 0;
    if (!ok) continue;
    const Vec x = grid.point(i);
    const cplx lhs = cplx(0.0, hb) * (psi_hi[i] - psi_lo[i]) / (2.0 * dt) + 0.5 * hb * hb * lap_psi[i] -
                     fan.V.value(t, x) * psi[i];
    const cplx rhs = 0.5 * hb * hb * lap_a[i] * std::exp(cplx(0.0, mid.S[i] / hb));
    out.max_defect = std::max(out.max_defect, std::abs(lhs - rhs));
    out.max_residual = std::max(out.max_residual, std::abs(rhs));
    ++out.points;
  }
  return out;
}

void write_wkb_field_csv(std::ostream& out, const WKBField& field) {
  const int n = field.grid.dimension();
  for (int a = 0; a < n; ++a) out << 'x' << (a + 1) << ',';
  out << "S,a,valid\n";
  char buf[64];
  for (std::size_t i = 0; i < field.grid.size(); ++i) {
    const Vec x = field.grid.point(i);
    for (int a = 0; a < n; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g,", x[a]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", field.S[i], field.a[i], field.valid[i] ? 1 : 0);
    out << buf;
  }
}

void write_fan_csv(std::ostream& out, const CharacteristicFan& fan) {
  const int n = fan.dimension();
  out << "seed,t";
  for (int a = 0; a < n; ++a) out << ",x" << (a + 1);
  for (int a = 0; a < n; ++a) out << ",p" << (a + 1);
  out << ",S,J\n";
  char buf[64];
  for (std::size_t s = 0; s < fan.seed_count(); ++s) {
    for (std::size_t k = 0; k < fan.times.size(); ++k) {
      out << s;
      std::snprintf(buf, sizeof buf, ",%.17g", fan.times[k]);
      out << buf;
      const Vec& y = fan.states[s][k];
      for (int a = 0; a < 2 * n; ++a) {
        std::snprintf(buf, sizeof buf, ",%.17g", y[a]);
        out << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", y[2 * n], fan.J[s][k]);
      out << buf;
    }
  }
}

}  // namespace sclab
