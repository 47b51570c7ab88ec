#pragma once

#include "sclab/ode.hpp"

#include <complex>
#include <cstddef>
#include <vector>

namespace sclab {

using cplx = std::complex<double>;

/// Uniform periodic grid in one or two dimensions: points lower + i h with
/// h = length / N. Flat index is row-major (axis 0 slowest).
struct UniformGrid {
  std::vector<double> lower;
  std::vector<double> length;
  std::vector<int> points;

  static UniformGrid line(double lower, double length, int n) { return {{lower}, {length}, {n}}; }
  static UniformGrid plane(double x0, double lx, int nx, double y0, double ly, int ny) {
    return {{x0, y0}, {lx, ly}, {nx, ny}};
  }

  int dimension() const { return static_cast<int>(points.size()); }
  std::size_t size() const;
  double spacing(int axis) const { return length[axis] / points[axis]; }
  double cell_volume() const;
  double coordinate(int axis, int i) const { return lower[axis] + i * spacing(axis); }
  /// Multi-index of a flat index.
  std::vector<int> unflatten(std::size_t index) const;
  std::size_t flatten(const std::vector<int>& idx) const;
  Vec point(std::size_t index) const;
  /// Flat index of the neighbour offset by `shift` along `axis` (periodic).
  std::size_t neighbour(std::size_t index, int axis, int shift) const;
  bool same_as(const UniformGrid& other) const;
  void validate() const;
};

/// Complex wavefunction samples on a periodic grid.
struct WaveGrid {
  UniformGrid grid;
  std::vector<cplx> values;
  double hbar = 1.0;

  WaveGrid() = default;
  WaveGrid(UniformGrid g, std::vector<cplx> v, double h = 1.0);
  static WaveGrid zeros(const UniformGrid& g, double hbar = 1.0);

  std::size_t size() const { return values.size(); }
  /// Riemann-sum L2 norm.
  double norm() const;
  void normalize();
};

/// Sixth-order central differences on a periodic grid (stencil radius 3).
inline constexpr int kStencilRadius = 3;
std::vector<double> laplacian_fd(const UniformGrid& grid, const std::vector<double>& f);
std::vector<cplx> laplacian_fd(const UniformGrid& grid, const std::vector<cplx>& f);
/// d f / d x_axis.
std::vector<double> derivative_fd(const UniformGrid& grid, const std::vector<double>& f, int axis);

/// Riemann sum of |f|^2 over the grid.
double l2_norm_squared(const UniformGrid& grid, const std::vector<cplx>& f);

}  // namespace sclab
