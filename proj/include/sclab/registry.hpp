#pragma once

#include "sclab/geometry.hpp"

#include <map>
#include <string>
#include <vector>

namespace sclab {

/// Named numeric parameters for registry construction. Scalars are stored as
/// one-element lists.
using ParamMap = std::map<std::string, std::vector<double>>;

// Closed-form potentials. `n1_axes`, when non-empty, enables the fibre bound
// c(x) >= sup_y |d_1 V(x, y)| (coordinate norm) wherever it has a closed form.

PotentialField zero_potential(int dimension);
PotentialField constant_potential(int dimension, double value);
/// k/2 |x - center|^2
PotentialField harmonic_potential(double k, Vec center, const std::vector<int>& n1_axes = {});
/// slope . x + offset
PotentialField linear_potential(Vec slope, double offset, const std::vector<int>& n1_axes = {});
/// amplitude exp(-|x - center|^2 / (2 width^2))
PotentialField gaussian_potential(double amplitude, double width, Vec center,
                                  const std::vector<int>& n1_axes = {});
/// amplitude cos(wavenumber . x + phase)
PotentialField cosine_potential(double amplitude, Vec wavenumber, double phase,
                                const std::vector<int>& n1_axes = {});
/// sum_k coeffs[k] x_axis^k
PotentialField polynomial_potential(int dimension, int axis, std::vector<double> coeffs,
                                    const std::vector<int>& n1_axes = {});
/// slope x_a cos(wavenumber x_b + phase), a != b
PotentialField tilted_cosine_potential(int dimension, double slope, int axis_a, double wavenumber,
                                       int axis_b, double phase, const std::vector<int>& n1_axes = {});
/// Pointwise sum; fibre bounds add when every term has one.
PotentialField sum_potential(const std::vector<PotentialField>& terms);
/// scale * f
PotentialField scaled_potential(const PotentialField& f, double scale);

/// Builds a potential from its registry name: zero, constant, harmonic, linear,
/// gaussian, cosine, polynomial (alias custom-polynomial), tilted-cosine.
/// Unknown names or parameters raise ValidationError.
PotentialField make_potential(const std::string& name, const ParamMap& params, int dimension,
                              const std::vector<int>& n1_axes = {});

/// Parameter names accepted by make_potential for `name`.
std::vector<std::string> potential_parameters(const std::string& name);
std::vector<std::string> potential_names();

}  // namespace sclab
