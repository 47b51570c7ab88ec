#pragma once

#include "sclab/dynamics.hpp"

#include <functional>
#include <iosfwd>
#include <vector>

namespace sclab {

struct SteeringSegment {
  ControlSignal control;
  double duration = 0.0;
};

/// Consecutive control segments plus the limit-system prediction.
struct SteeringPlan {
  std::vector<SteeringSegment> segments;
  PhasePoint predicted_endpoint;
  double epsilon = 0.0;

  double total_duration() const;
  /// All segments joined into one control signal.
  ControlSignal combined() const;
};

/// Simulates the plan segment by segment, starting each with `steps` RK4
/// steps (refined by the step-halving check as needed).
PhasePoint realize(const HamiltonianSpec& spec, const PhasePoint& start, const SteeringPlan& plan,
                   int steps = 64);

/// Combined control covector sum_i a_i dW_i(x). An empty `weights` means the
/// single-channel case a = (1).
Vec control_covector(const HamiltonianSpec& spec, const Vec& x, const Vec& weights = Vec());

/// u = -k/eps on [0, eps]; prediction start + k (0, dW(x0)).
SteeringPlan impulse_steer(const HamiltonianSpec& spec, const PhasePoint& start, double k, double eps,
                           const Vec& weights = Vec());

/// Impulse of duration eps^2 adding (k/eps) dW(x0), then free flight for eps.
/// The projection of the prediction is the time-1 point of the geodesic with
/// initial covector k dW(x0); its momentum is that geodesic's final covector / eps.
SteeringPlan geodesic_burst(const HamiltonianSpec& spec, const PhasePoint& start, double k, double eps,
                            const Vec& weights = Vec(), double geodesic_step = 1e-3);

struct GradientCurve {
  std::vector<Vec> points;           // ordered along increasing arc length
  std::vector<double> arc_length;    // signed, zero at the start point
};

struct GradientCurveOptions {
  double ds = 0.0;                   // arc-length step; 0 picks min(tol/10, 1e-2)
  double max_arc_length = 100.0;     // per direction
};

/// Integral curve of grad W / |grad W| through x0 in both directions,
/// stopping at critical points or the length limit.
GradientCurve trace_gradient_curve(const HamiltonianSpec& spec, const Vec& x0, double ds, double max_length);

/// Chain of geodesic bursts following polygonal geodesic chords of the
/// gradient curve from pi(start) to `target`.
SteeringPlan gradient_curve_steer(const HamiltonianSpec& spec, const PhasePoint& start, const Vec& target,
                                  double tol, double eps, const GradientCurveOptions& options = {});

/// Initial covector of the geodesic from x0 reaching x1 at time 1 (shortest
/// displacement on circle axes; Newton shooting for non-flat charts).
Vec connecting_covector(const ChartSpace& space, const Vec& x0, const Vec& x1, double step = 1e-3);

/// Steering with n = dim control potentials: burst along the connecting
/// geodesic, then a final impulse matching the momentum of `target`.
SteeringPlan full_rank_steer(const HamiltonianSpec& spec, const PhasePoint& start, const PhasePoint& target,
                             double eps, double tol);

struct EpsilonSearch {
  double epsilon = 0.0;
  double error = 0.0;
  bool reached = false;
  std::vector<double> tried_eps;
  std::vector<double> tried_error;
};

/// Halves eps from `eps0` until error(eps) < tol or eps < eps_min; keeps the
/// best attempt when the tolerance is never met.
EpsilonSearch search_epsilon(const std::function<double(double)>& error, double tol, double eps0 = 0.1,
                             double eps_min = 1e-6);

/// Least-squares slope of log(err) against log(eps).
double loglog_slope(const std::vector<double>& eps, const std::vector<double>& err);

/// Plan as key = value lines (`<prefix>.segment.<i>.breakpoints`, `.values`).
void write_plan(std::ostream& out, const SteeringPlan& plan, const std::string& prefix = "plan");

}  // namespace sclab
