#include "sclab/exit_time.hpp"

#include "sclab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sclab {

bool BoxRegion::contains(const Vec& x) const {
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const double v = x[axes[i]];
    if (!(v > lower[i] && v < upper[i])) return false;
  }
  return true;
}

bool BoxRegion::bounded() const {
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i])) return false;
  }
  return !axes.empty();
}

bool BoxRegion::inside(const BoxRegion& other) const {
  if (axes != other.axes) return false;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (lower[i] < other.lower[i] || upper[i] > other.upper[i]) return false;
  }
  return true;
}

void BoxRegion::validate(int dimension) const {
  require(axes.size() == lower.size() && axes.size() == upper.size(), ErrorCode::InvalidArgument,
          "box needs one interval per axis");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    require(axes[i] >= 0 && axes[i] < dimension, ErrorCode::InvalidArgument, "box axis out of range");
    require(lower[i] < upper[i], ErrorCode::InvalidArgument, "box intervals must be nonempty");
  }
}

ChaplyginResult chaplygin_compare(const Field& f, const Field& f_tilde, const Vec& z0, const Vec& z0_tilde, double T,
                                  double step) {
  require(z0.size() == z0_tilde.size(), ErrorCode::InvalidArgument, "initial states differ in size");
  require(T >= 0.0 && step > 0.0, ErrorCode::InvalidArgument, "need T >= 0 and step > 0");
  constexpr double slack = 1e-9;
  require(((z0_tilde - z0).array() >= -slack).all(), ErrorCode::OrderingViolated,
          "initial states are not ordered");
  const Rhs a = [&f](double, const Vec& z, Vec& dz) { dz = f(z); };
  const Rhs b = [&f_tilde](double, const Vec& z, Vec& dz) { dz = f_tilde(z); };
  ChaplyginResult out;
  Vec z = z0, zt = z0_tilde;
  out.times.push_back(0.0);
  out.lower.push_back(z);
  out.upper.push_back(zt);
  out.min_gap = (zt - z).minCoeff();
  const int steps = steps_for(T, step);
  const double h = steps ? T / steps : 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t = i * h;
    z = rk4_step(a, t, z, h);
    zt = rk4_step(b, t, zt, h);
    check_guard(z, t + h);
    check_guard(zt, t + h);
    const double gap = (zt - z).minCoeff();
    out.min_gap = std::min(out.min_gap, gap);
    if (gap < -slack) {
      std::ostringstream msg;
      msg << "ordering z <= z~ fails at t = " << t + h << " by " << -gap;
      fail(ErrorCode::OrderingViolated, msg.str());
    }
    out.times.push_back(t + h);
    out.lower.push_back(z);
    out.upper.push_back(zt);
  }
  return out;
}

namespace {

std::vector<int> n1_axes_of(const HamiltonianSpec& spec) {
  const auto& split = spec.space.product_split();
  if (split) return split->n1_axes;
  std::vector<int> all(spec.dimension());
  for (int i = 0; i < spec.dimension(); ++i) all[i] = i;
  return all;
}

std::vector<int> n2_axes_of(const HamiltonianSpec& spec) {
  const auto& split = spec.space.product_split();
  return split ? split->n2_axes : std::vector<int>{};
}

Mat block(const Mat& m, const std::vector<int>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Mat b(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) b(i, j) = m(idx[i], idx[j]);
  }
  return b;
}

}  // namespace

double w_constancy_defect(const HamiltonianSpec& spec, const BoxRegion& omega, const Vec& x0, int grid_per_axis) {
  const auto n1 = n1_axes_of(spec);
  const auto n2 = n2_axes_of(spec);
  const int d = static_cast<int>(omega.axes.size());
  int g = std::max(2, grid_per_axis);
  while (d > 0 && std::pow(static_cast<double>(g), d) > 20000.0 && g > 2) --g;
  std::vector<std::vector<double>> coords(d);
  for (int a = 0; a < d; ++a) {
    double lo = omega.lower[a], hi = omega.upper[a];
    const double c = x0[omega.axes[a]];
    if (!std::isfinite(lo)) lo = std::min(c, hi) - 2.0;
    if (!std::isfinite(hi)) hi = std::max(c, lo) + 2.0;
    for (int i = 0; i < g; ++i) coords[a].push_back(lo + (hi - lo) * i / (g - 1));
  }
  const double offsets[] = {0.0, 0.37, -0.37, 1.1, -1.1, 2.9, -2.9};
  double worst = 0.0;
  std::vector<int> idx(d, 0);
  for (;;) {
    Vec x = x0;
    for (int a = 0; a < d; ++a) x[omega.axes[a]] = coords[a][idx[a]];
    for (double off : offsets) {
      Vec xy = x;
      for (int j : n2) xy[j] += off;
      for (const auto& w : spec.W) {
        const Vec grad = w.grad(xy);
        double s = 0.0;
        for (int i : n1) s += grad[i] * grad[i];
        worst = std::max(worst, std::sqrt(s));
      }
      if (n2.empty()) break;
    }
    int a = 0;
    while (a < d && ++idx[a] == g) idx[a++] = 0;
    if (a == d) break;
  }
  return worst;
}

double norm_factor(const HamiltonianSpec& spec, const Vec& x) {
  if (spec.V.norm_factor) return spec.V.norm_factor(x);
  if (spec.space.is_flat()) return 1.0;
  const Mat metric = block(cometric_at(spec.space, x), n1_axes_of(spec)).inverse();
  return std::sqrt(metric.diagonal().maxCoeff());
}

ExitBound exit_lower_bound(const HamiltonianSpec& spec, const BoxRegion& omega, const PhasePoint& start,
                           const ExitBoundOptions& options) {
  omega.validate(spec.dimension());
  const auto n1 = n1_axes_of(spec);
  for (int a : omega.axes) {
    require(std::find(n1.begin(), n1.end(), a) != n1.end(), ErrorCode::InvalidArgument,
            "Omega must constrain N1 axes only");
  }
  require(static_cast<bool>(spec.V.fibre_bound), ErrorCode::InvalidArgument,
          "the drift potential needs a fibre bound c(x) for the exit-time bound");
  ExitBound out;
  out.max_d1W = w_constancy_defect(spec, omega, start.x, options.grid_per_axis);
  if (!(out.max_d1W < options.constancy_tol)) {
    std::ostringstream msg;
    msg << "control potential is not constant along N1 on Omega (max |d_1 W| = " << out.max_d1W << ")";
    fail(ErrorCode::HypothesisViolated, msg.str());
  }
  if (!omega.contains(start.x)) {
    out.bound = 0.0;
    return out;
  }
  const int k = static_cast<int>(n1.size());
  require(k <= 16, ErrorCode::InvalidArgument, "too many N1 axes for the sign-pattern enumeration");
  const Vec y_frozen = start.x;
  auto full = [&](const Vec& xr) {
    Vec x = y_frozen;
    for (int i = 0; i < k; ++i) x[n1[i]] = xr[i];
    return x;
  };
  const bool flat = spec.space.is_flat();
  auto run = [&](unsigned pattern, int steps) {
    Vec sigma(k);
    for (int i = 0; i < k; ++i) sigma[i] = (pattern >> i) & 1u ? -1.0 : 1.0;
    const Rhs rhs = [&, sigma](double, const Vec& z, Vec& dz) {
      const Vec xr = z.head(k);
      const Vec pr = z.tail(k);
      const Vec x = full(xr);
      const double force = norm_factor(spec, x) * spec.V.fibre_bound(x);
      if (flat) {
        dz.head(k) = pr;
        dz.tail(k) = force * sigma;
        return;
      }
      const Mat g = spec.space.cometric(x);
      const auto dg = spec.space.cometric_derivative(x);
      dz.head(k) = block(g, n1) * pr;
      for (int i = 0; i < k; ++i) dz[k + i] = -0.5 * pr.dot(block(dg[n1[i]], n1) * pr) + force * sigma[i];
    };
    Vec z0(2 * k);
    for (int i = 0; i < k; ++i) {
      z0[i] = start.x[n1[i]];
      z0[k + i] = start.p[n1[i]];
    }
    const auto keep = [&](const Vec& z) { return omega.contains(full(z.head(k))); };
    return integrate_until(rhs, 0.0, z0, options.horizon, steps, keep, 1e-9);
  };
  out.bound = options.horizon;
  out.reached_horizon = true;
  const int base = steps_for(options.horizon, options.step);
  for (unsigned pattern = 0; pattern < (1u << k); ++pattern) {
    int steps = base;
    EventBracket coarse = run(pattern, steps);
    double t = coarse.t_lo;
    for (int level = 0;; ++level) {
      const EventBracket fine = run(pattern, 2 * steps);
      const bool agree = coarse.hit == fine.hit && std::abs(fine.t_lo - coarse.t_lo) < 1e-8;
      t = std::min(coarse.t_lo, fine.t_lo);
      if (agree) break;
      if (level == 8) fail(ErrorCode::StepTooCoarse, "comparison-system exit time did not settle");
      coarse = fine;
      steps *= 2;
    }
    out.per_pattern.push_back(t);
    if (t < out.bound) {
      out.bound = t;
      out.reached_horizon = false;
    }
  }
  return out;
}

double controlled_exit_time(const HamiltonianSpec& spec, const PhasePoint& start, const BoxRegion& omega,
                            const ControlSignal& u, const SampledExitOptions& options, bool* settled) {
  const auto inside = [&omega](const Vec& x) { return omega.contains(x); };
  double step = options.step;
  double previous = evolve_until_exit(spec, start, u, options.horizon, step, inside, 1e-9).time;
  for (int level = 0; level < options.max_refinements; ++level) {
    step *= 0.5;
    const double t = evolve_until_exit(spec, start, u, options.horizon, step, inside, 1e-9).time;
    if (std::abs(t - previous) < options.time_tol) {
      if (settled) *settled = true;
      return t;
    }
    previous = t;
  }
  if (settled) *settled = false;
  return previous;
}

ExitReport sampled_exit_time(const HamiltonianSpec& spec, const PhasePoint& start, const BoxRegion& omega,
                             const ControlEnsemble& ensemble, const SampledExitOptions& options) {
  omega.validate(spec.dimension());
  ensemble.validate();
  require(ensemble.channels == spec.channels(), ErrorCode::InvalidArgument,
          "ensemble channel count does not match the control potentials");
  ExitReport report;
  report.horizon = options.horizon;
  report.ensemble_size = ensemble.size();
  report.analytic_bound = std::numeric_limits<double>::quiet_NaN();
  try {
    ExitBoundOptions bo = options.bound;
    bo.horizon = options.horizon;
    report.analytic_bound = exit_lower_bound(spec, omega, start, bo).bound;
    report.hypotheses_hold = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::HypothesisViolated && e.code() != ErrorCode::InvalidArgument) throw;
  }
  const auto n = static_cast<std::size_t>(ensemble.size());
  report.exit_times.assign(n, options.horizon);
  report.member_seeds.resize(n);
  std::vector<char> settled(n, 1);
  for_each_index(options.exec, n, [&](std::size_t i) {
    const int idx = static_cast<int>(i);
    report.member_seeds[i] = ensemble.member_seed(idx);
    bool ok = true;
    report.exit_times[i] = controlled_exit_time(spec, start, omega, ensemble.member(idx), options, &ok);
    settled[i] = ok;
  });
  report.sampled_min_exit = options.horizon;
  for (std::size_t i = 0; i < n; ++i) {
    if (!settled[i]) ++report.unresolved;
    if (report.hypotheses_hold && report.exit_times[i] < report.analytic_bound) ++report.violations;
    if (report.witness_index < 0 || report.exit_times[i] < report.sampled_min_exit) {
      report.sampled_min_exit = report.exit_times[i];
      report.witness_index = static_cast<int>(i);
    }
  }
  if (report.witness_index >= 0) report.witness_control = ensemble.member(report.witness_index);
  return report;
}

}  // namespace sclab
