#pragma once

#include "sclab/dynamics.hpp"

#include <cstdint>

namespace sclab {

/// 64-bit mixer used to derive independent per-member generator seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic sampler of random piecewise-constant controls. Member i
/// depends only on (seed, i), so serial and parallel sweeps see the same
/// controls.
struct ControlEnsemble {
  int count = 100;
  double amplitude = 1.0;  // values drawn from [-amplitude, amplitude]
  int min_intervals = 1;
  int max_intervals = 8;
  double duration = 1.0;
  int channels = 1;
  std::uint64_t seed = 1;
  /// Stratify (first value, interval count) over the members.
  bool latin_hypercube = false;
  /// Append the constant controls +amplitude and -amplitude.
  bool adversarial = false;

  int size() const { return count + (adversarial ? 2 : 0); }
  ControlSignal member(int index) const;
  /// Seed reported for member i (derived from the ensemble seed).
  std::uint64_t member_seed(int index) const;
  void validate() const;
};

}  // namespace sclab
