#pragma once

#include "sclab/ensemble.hpp"
#include "sclab/parallel.hpp"

#include <optional>
#include <vector>

namespace sclab {

/// Gauss-Hermite rule for the weight e^{-x^2}, by Golub-Welsch.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
  static GaussHermite rule(int order);
};

/// Normalized Hermite polynomials h_n with h_n(x) e^{-x^2/2} = phi_n(x), the
/// eigenfunctions of -d^2/dx^2 + x^2 (eigenvalue 2n + 1). Fills out[0..n).
void hermite_polynomials(double x, int n, double* out);

struct HermiteBasis {
  int N = 0;
  GaussHermite quadrature;  // order >= 4N

  static HermiteBasis make(int N, int order = 0);
  double phi(int n, double x) const;
  /// max |<phi_i, phi_j> - delta_ij| under the quadrature.
  double orthonormality_defect() const;
};

struct CouplingMatrix {
  Mat b;
  double a = 0.0, bcoef = 0.0, c = 0.0;
  std::optional<double> eps;
  double crosscheck_error = 0.0;  // vs the Gaussian-moment closed form, i + j <= 4
  int size() const { return static_cast<int>(b.rows()); }
};

/// Integral of x^k e^{a x^2 + b x + c} over the line (a < 0).
double gaussian_moment(double a, double b, double c, int k);

/// b_ij = integral of phi_i phi_j e^{a x^2 + b x + c}. The quadrature is
/// shifted and rescaled to absorb the Gaussian, which makes it exact for
/// i + j below twice the order. QuadratureDivergence when a >= 1.
CouplingMatrix gaussian_coupling(double a, double b, double c, int N, int order = 0, Exec exec = Exec::parallel);

struct CutoffCoupling {
  CouplingMatrix b_hat;  // b - f(eps)
  Mat f;                 // integral over [-eps, eps]
};

/// f_ij(eps) by adaptive Gauss-Kronrod on [-eps, eps].
CutoffCoupling cutoff_coupling(double a, double b, double c, double eps, int N, Exec exec = Exec::parallel);

struct Connectivity {
  bool connected = false;
  std::vector<std::vector<int>> components;
  double threshold = 0.0;  // absolute edge threshold used
};

/// Union-find on the leading k x k minor with an edge (i, j) iff
/// |b_ij| > zero_tol * max |b|.
Connectivity minor_connectivity(const Mat& B, int k, double zero_tol = 1e-12);

struct GapVector {
  std::vector<double> eigenvalues;
  std::vector<double> gaps;
  static GapVector from_eigenvalues(std::vector<double> ev);
};

enum class RelationSearch { automatic, exhaustive, lattice };

/// Integer vector l with max |l_i| <= bound, not all zero, and
/// |sum l_i g_i| < precision. Exhaustive search fixes all but the last
/// coefficient and rounds that one; the lattice search LLL-reduces
/// [I | K g]. Automatic uses exhaustive for <= 4 gaps and bound <= 100.
/// A returned relation refutes Q-linear independence at this precision; none
/// found is evidence only.
std::optional<std::vector<long>> gap_rational_relation(const std::vector<double>& gaps, long coeff_bound,
                                                       double precision,
                                                       RelationSearch method = RelationSearch::automatic);

struct PerturbedSpectrum {
  GapVector gaps;
  double max_shift = 0.0;  // change of the reported eigenvalues when N_big doubles
  int N_big = 0;
};

/// Lowest N eigenvalues of diag(2i + 1) + mu B on the first N_big Hermite
/// functions; TruncationNotConverged when doubling N_big moves them by 1e-8 or more.
PerturbedSpectrum perturbed_spectrum(double mu, double a, double b, double c, int N, int N_big);

struct DiscOptions {
  double a = -1.0, b = 1.0, c = 0.0;
  double step = 1e-3;
  int angles = 8;          // initial points on the circle per control
  double drift_tol = 1e-6;
  double event_tol = 1e-10;
  Exec exec = Exec::parallel;
};

struct DiscReport {
  bool invariant = true;
  double max_drift = 0.0;           // max | |(x, p)| - r0 | over all samples
  std::vector<double> member_drift;
  int violations = 0;
  long crossings = 0;               // located switches across x = eps
};

/// H = p^2 + x^2 + u(t) 1_{x > eps} e^{a x^2 + b x + c}: integrates every
/// ensemble member from points of radius r0, switching dynamics at located
/// crossings of x = eps, and reports the radius drift.
DiscReport invariant_disc_check(double eps, const ControlEnsemble& ensemble, double horizon, double r0,
                                const DiscOptions& options = {});

}  // namespace sclab
