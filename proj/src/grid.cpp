#include "sclab/grid.hpp"

#include "sclab/error.hpp"

#include <cmath>

namespace sclab {

std::size_t UniformGrid::size() const {
  std::size_t n = 1;
  for (int p : points) n *= static_cast<std::size_t>(p);
  return n;
}

double UniformGrid::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < dimension(); ++a) v *= spacing(a);
  return v;
}

std::vector<int> UniformGrid::unflatten(std::size_t index) const {
  std::vector<int> idx(points.size());
  for (int a = dimension() - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(index % static_cast<std::size_t>(points[a]));
    index /= static_cast<std::size_t>(points[a]);
  }
  return idx;
}

std::size_t UniformGrid::flatten(const std::vector<int>& idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < dimension(); ++a) flat = flat * static_cast<std::size_t>(points[a]) + idx[a];
  return flat;
}

Vec UniformGrid::point(std::size_t index) const {
  const auto idx = unflatten(index);
  Vec x(dimension());
  for (int a = 0; a < dimension(); ++a) x[a] = coordinate(a, idx[a]);
  return x;
}

std::size_t UniformGrid::neighbour(std::size_t index, int axis, int shift) const {
  auto idx = unflatten(index);
  const int n = points[axis];
  idx[axis] = ((idx[axis] + shift) % n + n) % n;
  return flatten(idx);
}

bool UniformGrid::same_as(const UniformGrid& other) const {
  return lower == other.lower && length == other.length && points == other.points;
}

void UniformGrid::validate() const {
  require(dimension() == 1 || dimension() == 2, ErrorCode::InvalidArgument, "grids are 1D or 2D");
  require(lower.size() == points.size() && length.size() == points.size(), ErrorCode::InvalidArgument,
          "grid description is inconsistent");
  for (int a = 0; a < dimension(); ++a) {
    require(points[a] >= 4, ErrorCode::InvalidArgument, "grid needs at least 4 points per axis");
    require(std::isfinite(lower[a]) && length[a] > 0.0, ErrorCode::InvalidArgument, "grid box must be finite");
  }
}

WaveGrid::WaveGrid(UniformGrid g, std::vector<cplx> v, double h) : grid(std::move(g)), values(std::move(v)), hbar(h) {
  grid.validate();
  require(values.size() == grid.size(), ErrorCode::GridMismatch, "values do not match the grid size");
  require(hbar > 0.0, ErrorCode::InvalidArgument, "hbar must be positive");
}

WaveGrid WaveGrid::zeros(const UniformGrid& g, double hbar) { return WaveGrid(g, std::vector<cplx>(g.size()), hbar); }

double WaveGrid::norm() const { return std::sqrt(l2_norm_squared(grid, values)); }

void WaveGrid::normalize() {
  const double n = norm();
  require(n > 0.0, ErrorCode::InvalidArgument, "cannot normalize the zero state");
  for (auto& v : values) v /= n;
}

double l2_norm_squared(const UniformGrid& grid, const std::vector<cplx>& f) {
  double s = 0.0;
  for (const auto& v : f) s += std::norm(v);
  return s * grid.cell_volume();
}

namespace {

constexpr double kSecond[4] = {0.0, 1.5, -0.15, 1.0 / 90.0};
constexpr double kFirst[4] = {0.0, 0.75, -0.15, 1.0 / 60.0};

template <class T>
std::vector<T> laplacian_impl(const UniformGrid& grid, const std::vector<T>& f) {
  require(f.size() == grid.size(), ErrorCode::GridMismatch, "field does not match the grid");
  std::vector<T> out(f.size(), T{});
  for (int a = 0; a < grid.dimension(); ++a) {
    const double h2 = grid.spacing(a) * grid.spacing(a);
    for (std::size_t i = 0; i < f.size(); ++i) {
      T sum = -(49.0 / 18.0) * f[i];
      for (int k = 1; k <= 3; ++k) sum += kSecond[k] * (f[grid.neighbour(i, a, k)] + f[grid.neighbour(i, a, -k)]);
      out[i] += sum / h2;
    }
  }
  return out;
}

}  // namespace

std::vector<double> laplacian_fd(const UniformGrid& grid, const std::vector<double>& f) {
  return laplacian_impl(grid, f);
}

std::vector<cplx> laplacian_fd(const UniformGrid& grid, const std::vector<cplx>& f) { return laplacian_impl(grid, f); }

std::vector<double> derivative_fd(const UniformGrid& grid, const std::vector<double>& f, int axis) {
  require(f.size() == grid.size(), ErrorCode::GridMismatch, "field does not match the grid");
  std::vector<double> out(f.size());
  const double h = grid.spacing(axis);
  for (std::size_t i = 0; i < f.size(); ++i) {
    double sum = 0.0;
    for (int k = 1; k <= 3; ++k) sum += kFirst[k] * (f[grid.neighbour(i, axis, k)] - f[grid.neighbour(i, axis, -k)]);
    out[i] = sum / h;
  }
  return out;
}

}  // namespace sclab
