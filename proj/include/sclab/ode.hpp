#pragma once

#include <Eigen/Dense>

#include <functional>

namespace sclab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Right-hand side y' = f(t, y), written into `dydt` (already sized).
using Rhs = std::function<void(double t, const Vec& y, Vec& dydt)>;

/// Coordinates beyond this magnitude are treated as a finite-time escape.
inline constexpr double kOverflowGuard = 1e12;

/// Step-halving acceptance threshold used by every checked integration.
inline constexpr double kHalvingTolerance = 1e-8;

/// One classical fourth-order Runge-Kutta step.
Vec rk4_step(const Rhs& f, double t, const Vec& y, double h);

/// Throws TrajectoryEscape when any entry is non-finite or exceeds the guard.
void check_guard(const Vec& y, double t);

/// Integrates from t0 to t1 with `steps` equal RK4 steps. The observer, when
/// given, sees every accepted state including the initial one.
using Observer = std::function<void(double t, const Vec& y)>;
Vec integrate_fixed(const Rhs& f, double t0, const Vec& y0, double t1, int steps,
                    const Observer& observer = {});

/// Number of equal steps of size at most `step` covering a span.
int steps_for(double span, double step);

struct CheckedResult {
  Vec y;
  int steps = 0;  // steps of the accepted (finer) run
};

/// Integrates with the requested step and with the step halved; accepts when
/// the two endpoints agree to kHalvingTolerance relative (floor 1 on the scale).
/// Refines up to `max_refinements` times before raising StepTooCoarse.
CheckedResult integrate_checked(const Rhs& f, double t0, const Vec& y0, double t1, double step,
                                int max_refinements = 8, double tolerance = kHalvingTolerance);

struct EventBracket {
  bool hit = false;
  double t_lo = 0.0;  // last time the predicate held
  double t_hi = 0.0;  // first time it failed (equal to t_lo when never hit)
  Vec y_lo;
  Vec y_hi;
};

/// Fixed-step RK4 from t0 to t1 while `keep(y)` holds. When a step ends with
/// keep false, the crossing is bisected on a single RK4 substep from the last
/// good state until the bracket is shorter than `time_tol`.
EventBracket integrate_until(const Rhs& f, double t0, const Vec& y0, double t1, int steps,
                             const std::function<bool(const Vec&)>& keep, double time_tol);

/// Relative mismatch with unit floor: |a-b|_inf / max(1, |b|_inf).
double relative_mismatch(const Vec& a, const Vec& b);

}  // namespace sclab
