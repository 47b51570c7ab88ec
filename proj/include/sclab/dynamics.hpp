#pragma once

#include "sclab/geometry.hpp"

#include <iosfwd>
#include <vector>

namespace sclab {

/// Piecewise-constant control on [0, T]. Row k of `values` holds the control
/// tuple on [breakpoints[k], breakpoints[k+1]); one column per control channel.
struct ControlSignal {
  std::vector<double> breakpoints;
  Mat values;

  static ControlSignal constant(double u, double duration);
  static ControlSignal constant(const Vec& u, double duration);
  /// Scalar-channel control from breakpoints and one value per interval.
  static ControlSignal piecewise(std::vector<double> breakpoints, const std::vector<double>& values);
  static ControlSignal piecewise_tuple(std::vector<double> breakpoints, Mat values);

  double duration() const { return breakpoints.back(); }
  int intervals() const { return static_cast<int>(values.rows()); }
  int channels() const { return static_cast<int>(values.cols()); }
  /// Right-continuous value; the last interval extends to T inclusive and the
  /// control is zero beyond T.
  Vec value_at(double t) const;
  /// Integral of each channel over [0, t].
  Vec integral(double t) const;
  /// Largest |u| over all intervals and channels.
  double max_abs() const;
  /// `first` followed by `second` shifted by first.duration().
  static ControlSignal concat(const ControlSignal& first, const ControlSignal& second);

  void validate() const;
};

/// ½ g^{ij} p_i p_j + V + sum_k u_k W_k on a chart.
struct HamiltonianSpec {
  ChartSpace space;
  PotentialField V;
  std::vector<PotentialField> W;

  HamiltonianSpec(ChartSpace space, PotentialField V, PotentialField W);
  HamiltonianSpec(ChartSpace space, PotentialField V, std::vector<PotentialField> W);

  int dimension() const { return space.dimension(); }
  int channels() const { return static_cast<int>(W.size()); }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<PhasePoint> states;
  ControlSignal control_used;

  const PhasePoint& final_state() const { return states.back(); }
};

double hamiltonian(const HamiltonianSpec& spec, const PhasePoint& point, double u);
double hamiltonian(const HamiltonianSpec& spec, const PhasePoint& point, const Vec& u);

/// Right-hand side of Hamilton's equations on the stacked state (x, p) for a
/// frozen control tuple.
Rhs hamiltonian_rhs(const HamiltonianSpec& spec, const Vec& u);

struct EvolveOptions {
  bool record = true;       // keep every accepted step; otherwise only endpoints of intervals
  int max_refinements = 8;  // step halvings before StepTooCoarse
};

/// RK4 over [0, T], restarting at every control breakpoint; each subinterval
/// passes the step-halving check. Circle coordinates of recorded states are
/// wrapped.
Trajectory evolve(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u, double step,
                  const EvolveOptions& options = {});

/// Endpoint only (no wrapping of circle coordinates).
PhasePoint evolve_endpoint(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u,
                           double step);

/// Linearization of Hamilton's equations at (x, p), ordered (x, p), for a
/// potential with the given Hessian.
Mat phase_jacobian(const ChartSpace& space, const Vec& x, const Vec& p, const Mat& potential_hessian);

/// Derivative of the time-T flow map with respect to the initial state,
/// ordered (x, p). Integrates the variational equations along the path.
Mat flow_jacobian(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u, double T,
                  double step = 1e-3);

struct ExitEvent {
  double time = 0.0;         // first time known to be outside, or the horizon
  double last_inside = 0.0;  // lower end of the final bracket
  bool exited = false;
  PhasePoint state;          // state at `time`
};

/// Fixed-step RK4 with breakpoint restarts until `inside(x)` first fails; the
/// crossing is bisected on a single RK4 substep to `time_tol`. A start point
/// already outside exits at time 0.
ExitEvent evolve_until_exit(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u,
                            double horizon, double step, const std::function<bool(const Vec&)>& inside,
                            double time_tol = 1e-8);

/// CSV with columns t, x_1..x_n, p_1..p_n, u (u_1..u_m for several channels).
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

}  // namespace sclab
