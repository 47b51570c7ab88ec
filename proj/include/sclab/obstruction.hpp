#pragma once

#include "sclab/ensemble.hpp"
#include "sclab/schrodinger.hpp"
#include "sclab/wkb.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sclab {

/// Localization experiment on a periodic grid, hbar = 1. The N1 factor is
/// grid axis 0. In the scalar case the grid is 1D; in the product case it is
/// 2D with N2 = axis 1 and the ansatz is chi(x) psi1(t, x) psi2(t, y).
struct ObstructionConfig {
  UniformGrid grid = UniformGrid::line(0.0, 20.0, 512);
  PotentialField V;
  PotentialField W;
  BoxRegion omega = BoxRegion::interval(0, 5.0, 15.0);
  double omega_prime_lower = 6.5;
  double omega_prime_upper = 13.5;
  PotentialField S0;  // functions of x only
  PotentialField a0;  // rescaled so that ||chi a0|| = 1
  int seeds = 201;    // characteristic seeds across Omega

  bool product = false;
  PotentialField V_x;  // N1 factor potential driving the WKB fan (product case)
  PotentialField V_y;  // N2 factor potential
  PotentialField b0;   // N2 initial factor, normalized on the y grid

  std::vector<double> eps_grid{0.05, 0.1, 0.2, 0.4, 0.8};
  int samples_per_eps = 16;
  ControlEnsemble ensemble;
  double distance_floor = 0.0;
  double witness_width = 2.0;  // width of the Gaussian psi1 outside Omega
  double duhamel_tol = 1e-6;
  double constancy_tol = 1e-9;
  /// Run with the u-dependent residual term instead of raising HypothesisViolated.
  bool allow_broken_hypothesis = false;
  double dt = 0.0;              // split-step request; 0 = default heuristic
  double bisection_tol = 1e-3;  // relative, for estimate_Tq_lower_bound
  Exec exec = Exec::parallel;

  void validate() const;
};

struct ObstructionRecord {
  double eps = 0.0;
  int member = 0;
  std::uint64_t seed = 0;
  double delta = 0.0;              // integral of ||r|| over [0, eps]
  double max_deviation = 0.0;      // max over samples of ||psi(t) - phi(t)||
  double duhamel_margin = 0.0;     // min over samples t > 0 of delta(t) - ||psi(t) - phi(t)||
  double min_distance = 0.0;       // min over samples of ||psi1 - psi(t)||
  double outside_probability = 0.0;  // mass outside Omega at t = eps
  bool duhamel_ok = true;
  bool floor_ok = true;
  bool outside_ok = true;          // sqrt(P_out) <= delta + initial tail
};

struct ObstructionReport {
  std::vector<ObstructionRecord> records;
  std::vector<double> eps_grid;
  std::vector<double> delta_max;  // per eps, over the ensemble
  std::vector<double> delta_min;
  double delta_spread = 0.0;      // max over eps of delta_max - delta_min
  double certified_bound = 0.0;   // largest eps with delta_max < 1 - floor
  int duhamel_violations = 0;
  int floor_violations = 0;
  int outside_violations = 0;
  bool hypotheses_hold = true;
  double constancy_defect = 0.0;
  double constant_value = 0.0;    // c with W = c on Omega (scalar case)
  double conjugate_floor = 0.0;
  double initial_tail = 0.0;      // mass of phi(0) outside Omega
  double max_boundary_mass = 0.0;
  bool boundary_flag = false;
  int ensemble_size = 0;
  double a0_scale = 1.0;          // factor applied to a0 for ||chi a0|| = 1
  std::vector<double> residual_times;  // sample times and ||r|| of the u = 0 residual
  std::vector<double> residual_norms;
};

/// Fan, cutoff and grids prepared once per configuration.
class ObstructionSetup {
 public:
  explicit ObstructionSetup(const ObstructionConfig& config, double horizon = 0.0);

  const ObstructionConfig& config() const { return config_; }
  const CharacteristicFan& fan() const { return fan_; }
  const CutoffFunction& cutoff() const { return chi_; }
  const UniformGrid& x_grid() const { return x_grid_; }
  std::optional<UniformGrid> y_grid() const;
  double a0_scale() const { return scale_; }
  double conjugate_floor() const { return conjugate_floor_; }
  double constancy_defect() const { return defect_; }
  double constant_value() const { return c_; }
  bool hypotheses_hold() const { return defect_ < config_.constancy_tol; }

  /// chi a e^{iS} on the x grid (no control phase).
  std::vector<cplx> scalar_ansatz(double t) const;
  /// Scalar-case residual at t (no control phase) on the x grid.
  std::vector<cplx> scalar_residual(double t) const;
  /// psi2(0, y) on the y grid (product case).
  WaveGrid initial_factor() const;
  /// Normalized witness supported outside Omega on the full grid.
  WaveGrid witness() const;
  /// W tilde(y) = W(x_c, y) for the product case; W itself otherwise.
  PotentialField factor_control() const;

 private:
  WKBField field(double t) const;

  ObstructionConfig config_;
  UniformGrid x_grid_;
  CharacteristicFan fan_;
  CutoffFunction chi_;
  double scale_ = 1.0;
  double conjugate_floor_ = 0.0;
  double defect_ = 0.0;
  double c_ = 0.0;
};

/// phi(t) = chi a e^{iS} e^{-ic int u} (scalar) or chi psi1(t, x) psi2(t, y)
/// with psi2 evolved on the N2 factor under V_y + u W tilde.
WaveGrid build_ansatz(const ObstructionSetup& setup, const ControlSignal& u, double t);
WaveGrid build_ansatz(const ObstructionConfig& config, const ControlSignal& u, double t);

/// Evolves every ensemble member from phi(0) and records the Duhamel,
/// distance and leakage quantities per (eps, member).
ObstructionReport run_localization_experiment(const ObstructionConfig& config);

/// u = 0 residual bound delta(eps) (control-independent when the hypotheses hold).
double residual_delta(const ObstructionSetup& setup, double eps, int samples);

/// Largest eps with delta(eps) < 1 - floor, by bisection on [0, horizon];
/// horizon defaults to the largest eps of the grid.
double estimate_Tq_lower_bound(const ObstructionConfig& config, double horizon = 0.0);

/// Largest eps on a sampled (eps, delta) curve with delta < 1 - floor, with
/// linear interpolation to the crossing between samples.
double invert_delta(const std::vector<double>& eps, const std::vector<double>& delta, double floor);

/// 1D torus demo: V = 0.5 cos(2 pi x / 20), W = 1, Omega = (5, 15).
ObstructionConfig default_obstruction_config();
/// Product demo on a 2D grid: V(x, y) = V(y), W = W tilde(y).
ObstructionConfig product_obstruction_config();

}  // namespace sclab
