#pragma once

#include "sclab/dynamics.hpp"
#include "sclab/exit_time.hpp"
#include "sclab/grid.hpp"

#include <iosfwd>
#include <vector>

namespace sclab {

struct SplitStepOptions {
  /// Requested step; 0 selects min(control subinterval)/64 capped by the
  /// spectral heuristic dt <= 2 pi / (8 max kinetic frequency).
  double dt = 0.0;
  /// Raise GridTooCoarse when the top 10% of Fourier modes hold more than 1e-8 of the mass.
  bool check_resolution = true;
};

struct SplitStepResult {
  std::vector<double> times;     // the requested sample times
  std::vector<WaveGrid> states;  // psi at each sample time
  int steps = 0;
  double dt_used = 0.0;          // largest step actually taken
  double max_boundary_mass = 0.0;
  bool boundary_flag = false;    // outer-10% mass exceeded 1e-8 at a sample
};

/// Strang splitting for i hbar psi_t = -hbar^2/2 Delta psi + (V + u(t) W) psi
/// on the periodic grid: half potential phase, spectral kinetic step via
/// FFTW, half potential phase. Each control subinterval (and each gap between
/// sample times) is divided into equal steps no larger than dt, so the
/// potential is constant within every step.
SplitStepResult split_step_run(const WaveGrid& psi0, const PotentialField& V, const PotentialField& W,
                               const ControlSignal& u, const std::vector<double>& sample_times,
                               const SplitStepOptions& options = {});

/// psi(T) only.
WaveGrid split_step_evolve(const WaveGrid& psi0, const PotentialField& V, const PotentialField& W,
                           const ControlSignal& u, double T, double dt = 0.0);

/// Default step for a control on a grid (see SplitStepOptions::dt).
double default_split_step(const UniformGrid& grid, double hbar, const ControlSignal& u, double T);

/// Fraction of the mass carried by the top 10% of Fourier modes along any axis.
double high_mode_fraction(const WaveGrid& psi);
/// Mass within the outer 10% of the box along any axis.
double boundary_mass(const WaveGrid& psi);

/// Riemann sum of |psi|^2 over grid points in the region. Grid points on the
/// region boundary carry half weight per boundary axis.
double region_probability(const WaveGrid& psi, const BoxRegion& region);

/// L2 Riemann-sum distance; GridMismatch for different grids.
double l2_distance(const WaveGrid& psi, const WaveGrid& phi);
double l2_distance(const UniformGrid& grid, const std::vector<cplx>& psi, const std::vector<cplx>& phi);

/// CSV with columns x_i, re, im. Lines starting with '#' are skipped on import.
void write_wave_csv(std::ostream& out, const WaveGrid& psi);
WaveGrid read_wave_csv(std::istream& in, double hbar = 1.0);

/// Samples a callable on the grid.
template <class F>
std::vector<cplx> sample_on(const UniformGrid& grid, F&& f) {
  std::vector<cplx> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f(grid.point(i));
  return v;
}

}  // namespace sclab
