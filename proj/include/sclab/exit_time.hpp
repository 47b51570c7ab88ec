#pragma once

#include "sclab/dynamics.hpp"
#include "sclab/ensemble.hpp"
#include "sclab/parallel.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace sclab {

/// Open box over the N1 axes; infinite bounds are allowed (no boundary on that axis).
struct BoxRegion {
  std::vector<int> axes;
  std::vector<double> lower;
  std::vector<double> upper;

  static BoxRegion interval(int axis, double lo, double hi) { return {{axis}, {lo}, {hi}}; }
  bool contains(const Vec& x) const;
  bool bounded() const;
  /// True when this box lies inside `other` (same axes).
  bool inside(const BoxRegion& other) const;
  void validate(int dimension) const;
};

struct ChaplyginResult {
  std::vector<double> times;
  std::vector<Vec> lower;   // z(t)
  std::vector<Vec> upper;   // z~(t)
  double min_gap = 0.0;     // min over steps and components of z~ - z
};

using Field = std::function<Vec(const Vec&)>;

/// Integrates z' = f(z) and z~' = f~(z~) on a common RK4 grid and certifies
/// z <= z~ componentwise at every step with 1e-9 slack.
ChaplyginResult chaplygin_compare(const Field& f, const Field& f_tilde, const Vec& z0, const Vec& z0_tilde,
                                  double T, double step);

struct ExitBoundOptions {
  double horizon = 10.0;    // returned when the comparison system never exits
  double step = 1e-3;
  int grid_per_axis = 11;   // W-constancy sampling
  double constancy_tol = 1e-9;
};

struct ExitBound {
  double bound = 0.0;
  bool reached_horizon = false;
  std::vector<double> per_pattern;  // exit time for each sign pattern
  double max_d1W = 0.0;             // measured W-constancy defect
};

/// Max over Omega (times a few fibre offsets around the start) of the
/// N1-gradient of every control potential.
double w_constancy_defect(const HamiltonianSpec& spec, const BoxRegion& omega, const Vec& x0,
                          int grid_per_axis = 11);

/// K(x) = max_i sqrt((g_N1^{-1})_{ii}); 1 for flat charts. Overridden by V.norm_factor.
double norm_factor(const HamiltonianSpec& spec, const Vec& x);

/// Control-independent lower bound on the exit time of the N1 projection from
/// Omega: minimum over the 2^{n1} sign patterns of the comparison system
/// x' = g_x p, p' = -(1/2) p.dg_x.p +- K c.
ExitBound exit_lower_bound(const HamiltonianSpec& spec, const BoxRegion& omega, const PhasePoint& start,
                           const ExitBoundOptions& options = {});

struct ExitReport {
  double analytic_bound = 0.0;   // NaN when the hypotheses fail
  bool hypotheses_hold = false;
  double sampled_min_exit = 0.0;
  int ensemble_size = 0;
  ControlSignal witness_control;
  int witness_index = -1;
  std::vector<double> exit_times;
  std::vector<std::uint64_t> member_seeds;
  int violations = 0;            // members exiting before the analytic bound
  int unresolved = 0;            // members whose exit time did not settle under step halving
  double horizon = 0.0;
};

struct SampledExitOptions {
  double horizon = 5.0;
  double step = 1e-3;
  double time_tol = 1e-7;  // agreement required between step h and h/2
  int max_refinements = 5;
  ExitBoundOptions bound;
  Exec exec = Exec::parallel;
};

/// First exit time of a single controlled trajectory (upper end of the
/// located bracket), checked by step halving.
double controlled_exit_time(const HamiltonianSpec& spec, const PhasePoint& start, const BoxRegion& omega,
                            const ControlSignal& u, const SampledExitOptions& options, bool* settled = nullptr);

ExitReport sampled_exit_time(const HamiltonianSpec& spec, const PhasePoint& start, const BoxRegion& omega,
                             const ControlEnsemble& ensemble, const SampledExitOptions& options = {});

}  // namespace sclab
