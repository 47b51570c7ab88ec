#pragma once

#include "sclab/dynamics.hpp"
#include "sclab/exit_time.hpp"
#include "sclab/grid.hpp"
#include "sclab/parallel.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace sclab {

/// Potential V(t, x). When `piecewise_constant` is set the time dependence is
/// constant between consecutive breakpoints and is evaluated at the midpoint
/// of the current interval, so integrators never see the right-continuous
/// value at an interval end.
struct TimePotential {
  std::function<double(double, const Vec&)> value;
  std::function<Vec(double, const Vec&)> gradient;
  std::function<Mat(double, const Vec&)> hessian;
  std::vector<double> breakpoints;
  bool piecewise_constant = false;

  static TimePotential stationary(PotentialField V);
  /// V + u(t) W for a single-channel control.
  static TimePotential controlled(PotentialField V, PotentialField W, ControlSignal u);
};

/// Tensor grid of seed positions x0 (inclusive of both ends on every axis).
/// Flat index is row-major like UniformGrid.
struct SeedGrid {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> counts;

  static SeedGrid line(double lo, double hi, int n) { return {{lo}, {hi}, {n}}; }
  int dimension() const { return static_cast<int>(counts.size()); }
  std::size_t size() const;
  double spacing(int axis) const { return (upper[axis] - lower[axis]) / (counts[axis] - 1); }
  Vec point(std::size_t index) const;
  void validate() const;
};

/// Per-seed characteristic data sampled on a common time grid. Each state
/// stacks x, p, S, X = dx/dx0 and P = dp/dx0 (column-major), then the
/// accumulated integral of the Laplacian of S.
struct CharacteristicFan {
  ChartSpace space = ChartSpace::flat_lines(1);
  TimePotential V;
  SeedGrid seeds;
  double hbar = 1.0;
  std::vector<double> times;
  std::vector<int> substeps;                 // per seed, RK4 steps per sample interval
  std::vector<std::vector<Vec>> states;      // [seed][sample]
  std::vector<std::vector<double>> J;        // variational Jacobian, metric corrected
  std::vector<std::vector<double>> transport_log;  // integral of Delta S; NaN once the seed nears a caustic

  int dimension() const { return space.dimension(); }
  double horizon() const { return times.back(); }
  std::size_t seed_count() const { return states.size(); }

  Vec x(std::size_t seed, std::size_t k) const;
  Vec p(std::size_t seed, std::size_t k) const;
  double S(std::size_t seed, std::size_t k) const;
  Mat X(std::size_t seed, std::size_t k) const;

  /// State of one characteristic at an arbitrary time, re-integrated from the
  /// preceding sample with the accepted substep.
  Vec state_at(std::size_t seed, double t) const;
  /// Jacobian det dG^t of a stacked state started at `seed`.
  double jacobian_of(std::size_t seed, const Vec& state) const;
};

/// Integrates the projected Hamiltonian flow from p(0) = dS0(x0), the action
/// S' = p.gp/2 - V and the variational block for every seed. Samples are at
/// most `step` apart and include every potential breakpoint; each seed passes
/// the step-halving check on (x, p, S, X, P).
CharacteristicFan shoot_characteristics(const ChartSpace& space, const PotentialField& S0, const TimePotential& V,
                                        const SeedGrid& seeds, double T, double step, double hbar = 1.0,
                                        Exec exec = Exec::parallel);

/// First zero of J per seed (sign change plus bisection to 1e-8, or a
/// double-root touch located by minimizing |J|), or the horizon.
std::vector<double> first_conjugate_time(const CharacteristicFan& fan, Exec exec = Exec::parallel);

/// Caustic guard on |J| for the amplitude.
inline constexpr double kCausticGuard = 0.05;

struct WKBField {
  UniformGrid grid;
  double t = 0.0;
  double hbar = 1.0;
  std::vector<double> S;
  std::vector<double> a;
  std::vector<std::vector<double>> grad_S;  // [axis][point]
  std::vector<char> valid;

  /// a e^{iS/hbar} on valid points, zero elsewhere.
  std::vector<cplx> wave() const;
  std::size_t valid_count() const;
};

struct WKBFieldOptions {
  /// Restricts the mask (and the caustic guard) to this box; whole grid when empty.
  std::optional<BoxRegion> region;
  Exec exec = Exec::parallel;
};

/// Phase and amplitude on a flat grid: each grid point y is traced back to
/// x0 = (G^t)^{-1} y by Newton iteration on a sixth-order tensor interpolant
/// of the transported seeds, then S = S_t(x0) and a = a0(x0)/sqrt(J_t(x0)).
WKBField wkb_field(const CharacteristicFan& fan, const PotentialField& a0, const UniformGrid& grid, double t,
                   const WKBFieldOptions& options = {});

/// Smooth bump with support exactly the closed box [lower, upper]: a product
/// of exp(1 - 1/(1 - s^2)) over the axes, s rescaled to [-1, 1].
class CutoffFunction {
 public:
  static CutoffFunction box(std::vector<double> lower, std::vector<double> upper);
  /// chi = 1 everywhere.
  static CutoffFunction unit(int dimension);

  int dimension() const { return dimension_; }
  bool is_unit() const { return unit_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  double laplacian(const Vec& x) const;
  /// chi(x) > 0.
  bool positive_at(const Vec& x) const;

 private:
  int dimension_ = 1;
  bool unit_ = false;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// 1D bump and its first two derivatives at s.
struct BumpValue {
  double f = 0.0, df = 0.0, d2f = 0.0;
};
BumpValue bump(double s);

/// r = hbar^2 (chi e^{iS/hbar} Delta a / 2 + <grad chi, grad psi~> + psi~ Delta chi / 2)
/// times `global_phase`. Delta a and grad a are sixth-order differences of
/// the field, so every stencil around supp chi must be valid.
std::vector<cplx> wkb_residual(const WKBField& field, const CutoffFunction& chi, cplx global_phase = 1.0);

/// Trapezoid rule for the integral of a uniformly sampled series.
double duhamel_delta(const std::vector<double>& norms, double dt);

struct PdeDefect {
  double max_defect = 0.0;    // max |(i hbar d_t + hbar^2 Delta/2 - V) psi~ - hbar^2 e^{iS/hbar} Delta a/2|
  double max_residual = 0.0;  // max |hbar^2 Delta a / 2| over the same points
  std::size_t points = 0;
};

/// Applies the finite-difference Schrodinger operator (central difference in
/// time with half-width dt) to the WKB wave at time t on points whose spatial
/// stencils are valid at t - dt, t and t + dt.
PdeDefect wkb_pde_defect(const CharacteristicFan& fan, const PotentialField& a0, const UniformGrid& grid, double t,
                         double dt, const WKBFieldOptions& options = {});

/// CSV with columns x_i, S, a, valid.
void write_wkb_field_csv(std::ostream& out, const WKBField& field);
/// CSV with columns seed, t, x_i, p_i, S, J.
void write_fan_csv(std::ostream& out, const CharacteristicFan& fan);

}  // namespace sclab
