#include "sclab/ode.hpp"

#include "sclab/error.hpp"

#include <cmath>
#include <sstream>

namespace sclab {

Vec rk4_step(const Rhs& f, double t, const Vec& y, double h) {
  const auto n = y.size();
  Vec k1(n), k2(n), k3(n), k4(n);
  f(t, y, k1);
  f(t + 0.5 * h, y + 0.5 * h * k1, k2);
  f(t + 0.5 * h, y + 0.5 * h * k2, k3);
  f(t + h, y + h * k3, k4);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void check_guard(const Vec& y, double t) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || std::abs(y[i]) > kOverflowGuard) {
      std::ostringstream msg;
      msg << "state component " << i << " = " << y[i] << " at t = " << t
          << " exceeds the overflow guard";
      fail(ErrorCode::TrajectoryEscape, msg.str());
    }
  }
}

int steps_for(double span, double step) {
  require(step > 0.0, ErrorCode::InvalidArgument, "step must be positive");
  if (span <= 0.0) return 0;
  const double ratio = span / step;
  // Tolerate round-off so that span = k*step gives exactly k steps.
  return std::max(1, static_cast<int>(std::ceil(ratio - 1e-9)));
}

Vec integrate_fixed(const Rhs& f, double t0, const Vec& y0, double t1, int steps,
                    const Observer& observer) {
  Vec y = y0;
  if (observer) observer(t0, y);
  if (steps <= 0) return y;
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    y = rk4_step(f, t, y, h);
    check_guard(y, t + h);
    if (observer) observer(i + 1 == steps ? t1 : t + h, y);
  }
  return y;
}

EventBracket integrate_until(const Rhs& f, double t0, const Vec& y0, double t1, int steps,
                             const std::function<bool(const Vec&)>& keep, double time_tol) {
  EventBracket ev;
  Vec y = y0;
  const double h = steps > 0 ? (t1 - t0) / steps : 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    Vec next = rk4_step(f, t, y, h);
    check_guard(next, t + h);
    if (!keep(next)) {
      double lo = 0.0, hi = h;
      Vec at_lo = y, at_hi = next;
      while (hi - lo > time_tol) {
        const double mid = 0.5 * (lo + hi);
        Vec trial = rk4_step(f, t, y, mid);
        if (keep(trial)) {
          lo = mid;
          at_lo = std::move(trial);
        } else {
          hi = mid;
          at_hi = std::move(trial);
        }
      }
      ev.hit = true;
      ev.t_lo = t + lo;
      ev.t_hi = t + hi;
      ev.y_lo = std::move(at_lo);
      ev.y_hi = std::move(at_hi);
      return ev;
    }
    y = std::move(next);
  }
  ev.t_lo = ev.t_hi = t1;
  ev.y_lo = y;
  ev.y_hi = y;
  return ev;
}

double relative_mismatch(const Vec& a, const Vec& b) {
  const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

CheckedResult integrate_checked(const Rhs& f, double t0, const Vec& y0, double t1, double step,
                                int max_refinements, double tolerance) {
  int steps = steps_for(t1 - t0, step);
  if (steps == 0) return {y0, 0};
  Vec coarse = integrate_fixed(f, t0, y0, t1, steps);
  double mismatch = 0.0;
  for (int level = 0; level <= max_refinements; ++level) {
    Vec fine = integrate_fixed(f, t0, y0, t1, 2 * steps);
    mismatch = relative_mismatch(coarse, fine);
    if (mismatch < tolerance) return {fine, 2 * steps};
    coarse = std::move(fine);
    steps *= 2;
  }
  std::ostringstream msg;
  msg << "step halving did not converge on [" << t0 << ", " << t1 << "]: mismatch " << mismatch
      << " after " << max_refinements << " refinements";
  fail(ErrorCode::StepTooCoarse, msg.str());
}

}  // namespace sclab
