#include "sclab/ensemble.hpp"

#include "sclab/error.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace sclab {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void ControlEnsemble::validate() const {
  require(count >= 0, ErrorCode::InvalidArgument, "ensemble size must be nonnegative");
  require(amplitude >= 0.0, ErrorCode::InvalidArgument, "ensemble amplitude must be nonnegative");
  require(min_intervals >= 1 && max_intervals >= min_intervals, ErrorCode::InvalidArgument,
          "interval counts must satisfy 1 <= min <= max");
  require(duration > 0.0, ErrorCode::InvalidArgument, "control duration must be positive");
  require(channels >= 1, ErrorCode::InvalidArgument, "at least one control channel");
}

std::uint64_t ControlEnsemble::member_seed(int index) const {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

namespace {

// Position of `index` in a seeded permutation of 0..count-1.
int permuted(std::uint64_t seed, int count, int index) {
  std::vector<int> perm(count);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm[index];
}

}  // namespace

ControlSignal ControlEnsemble::member(int index) const {
  validate();
  require(index >= 0 && index < size(), ErrorCode::InvalidArgument, "ensemble index out of range");
  if (index >= count) {
    const double sign = index == count ? 1.0 : -1.0;
    return ControlSignal::constant(Vec::Constant(channels, sign * amplitude), duration);
  }
  std::mt19937_64 rng(member_seed(index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int span = max_intervals - min_intervals + 1;
  int intervals = 0;
  double first = 0.0;
  if (latin_hypercube) {
    const int s_amp = permuted(splitmix64(seed ^ 0xa5a5a5a5ULL), count, index);
    const int s_int = permuted(splitmix64(seed ^ 0x5a5a5a5aULL), count, index);
    first = -amplitude + 2.0 * amplitude * (s_amp + unit(rng)) / count;
    intervals = min_intervals + std::min(span - 1, static_cast<int>((s_int + unit(rng)) * span / count));
  } else {
    intervals = min_intervals + std::min(span - 1, static_cast<int>(unit(rng) * span));
  }
  std::vector<double> cuts;
  for (int k = 1; k < intervals; ++k) cuts.push_back(unit(rng) * duration);
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> breakpoints{0.0};
  for (double c : cuts) {
    // Drop coincident cuts (measure-zero, but keeps breakpoints strictly increasing).
    if (c > breakpoints.back() && c < duration) breakpoints.push_back(c);
  }
  breakpoints.push_back(duration);
  Mat values(static_cast<Eigen::Index>(breakpoints.size()) - 1, channels);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < channels; ++c) values(r, c) = -amplitude + 2.0 * amplitude * unit(rng);
  }
  if (latin_hypercube) values(0, 0) = first;
  return ControlSignal::piecewise_tuple(std::move(breakpoints), std::move(values));
}

}  // namespace sclab
