#pragma once

#include "sclab/ode.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sclab {

/// A point (x, p) of the cotangent bundle in chart coordinates.
struct PhasePoint {
  Vec x;
  Vec p;

  int dimension() const { return static_cast<int>(x.size()); }
  Vec stacked() const;
  static PhasePoint from_stacked(const Vec& y);
};

/// Partition of the chart axes into the factor N1 and the factor N2.
struct ProductSplit {
  std::vector<int> n1_axes;
  std::vector<int> n2_axes;
};

/// Chart-described manifold: a product of lines and circles with a cometric
/// g^{ij}(x) supplied by callbacks.
class ChartSpace {
 public:
  using CometricFn = std::function<Mat(const Vec&)>;
  /// Element k is the matrix of partial derivatives d g^{ij} / d x^k.
  using CometricDerivativeFn = std::function<std::vector<Mat>(const Vec&)>;

  /// Euclidean cometric. `periods[i] == 0` marks an unbounded line.
  static ChartSpace flat(std::vector<double> periods);
  static ChartSpace flat_lines(int dimension) { return flat(std::vector<double>(dimension, 0.0)); }

  ChartSpace(std::vector<double> periods, CometricFn cometric, CometricDerivativeFn derivative);

  int dimension() const { return static_cast<int>(periods_.size()); }
  bool is_flat() const { return flat_; }
  bool is_periodic(int axis) const { return periods_.at(axis) > 0.0; }
  double period(int axis) const { return periods_.at(axis); }
  const std::vector<double>& periods() const { return periods_; }

  /// Raw callback values; cometric_at() adds the validity checks.
  Mat cometric(const Vec& x) const;
  std::vector<Mat> cometric_derivative(const Vec& x) const;
  /// Second derivatives [k][l] = d^2 g / dx^k dx^l, central differences of the
  /// derivative callback (exactly zero for flat charts).
  std::vector<std::vector<Mat>> cometric_second_derivative(const Vec& x) const;

  /// Reduces circle coordinates into [0, L).
  Vec wrap(const Vec& x) const;

  ChartSpace& set_product_split(ProductSplit split);
  const std::optional<ProductSplit>& product_split() const { return split_; }

  /// Runtime checks on sampled points: symmetric positive definite cometric
  /// and derivative callback consistent with central differences (1e-6 rel).
  void validate(std::span<const Vec> samples) const;

 private:
  std::vector<double> periods_;
  CometricFn cometric_;
  CometricDerivativeFn derivative_;
  bool flat_ = false;
  std::optional<ProductSplit> split_;
};

/// Central-difference increment used for every finite-difference check.
inline double fd_step(double x) { return 1e-5 * (1.0 + std::abs(x)); }

/// Scalar potential with gradient and optional Hessian, plus the optional
/// fibre-wise metadata c(x) >= |d_1 V(x, .)| and the norm factor K(x).
struct PotentialField {
  using ScalarFn = std::function<double(const Vec&)>;
  using VectorFn = std::function<Vec(const Vec&)>;
  using MatrixFn = std::function<Mat(const Vec&)>;

  std::string name;
  ScalarFn value;
  VectorFn gradient;
  MatrixFn hessian;       // optional; central differences of the gradient otherwise
  ScalarFn fibre_bound;   // optional c(x)
  ScalarFn norm_factor;   // optional K(x)

  double operator()(const Vec& x) const { return value(x); }
  Vec grad(const Vec& x) const { return gradient(x); }
  Mat hess(const Vec& x) const;

  /// Gradient consistency with central differences (1e-6 rel) on samples, and
  /// nonnegativity of c and K where provided.
  void validate(std::span<const Vec> samples) const;
};

/// g^{ij}(x) with finiteness and positive-definiteness checks.
Mat cometric_at(const ChartSpace& space, const Vec& x);

/// g^{ij}(x) d_j f(x).
Vec riemannian_gradient(const ChartSpace& space, const PotentialField& f, const Vec& x);

/// Cometric norm of a covector, sqrt(g^{ij} p_i p_j).
double covector_norm(const ChartSpace& space, const Vec& x, const Vec& p);

/// Kinetic energy g^{ij} p_i p_j / 2.
double kinetic_energy(const ChartSpace& space, const PhasePoint& point);

/// Endpoint of the geodesic Hamiltonian flow (V = W = 0) after time t.
PhasePoint geodesic_endpoint(const ChartSpace& space, const Vec& x0, const Vec& p0, double t,
                             double step);

/// Evaluates the field of the geodesic/Hamiltonian kinetic part into (xdot, pdot).
void kinetic_rhs(const ChartSpace& space, const Vec& x, const Vec& p, Vec& xdot, Vec& pdot);

}  // namespace sclab
