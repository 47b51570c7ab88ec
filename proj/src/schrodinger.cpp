#include "sclab/schrodinger.hpp"

#include "sclab/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

namespace sclab {

namespace {

// Plan creation is not thread-safe in FFTW; execution on new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class FourierPair {
 public:
  explicit FourierPair(const UniformGrid& grid) : n_(grid.size()) {
    buffer_ = fftw_alloc_complex(n_);
    std::vector<int> dims(grid.points.begin(), grid.points.end());
    std::lock_guard<std::mutex> lock(planner_mutex());
    forward_ = fftw_plan_dft(grid.dimension(), dims.data(), buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft(grid.dimension(), dims.data(), buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FourierPair() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(buffer_);
  }
  FourierPair(const FourierPair&) = delete;
  FourierPair& operator=(const FourierPair&) = delete;

  void forward(cplx* data) const { fftw_execute_dft(forward_, reinterpret_cast<fftw_complex*>(data), reinterpret_cast<fftw_complex*>(data)); }
  void backward(cplx* data) const { fftw_execute_dft(backward_, reinterpret_cast<fftw_complex*>(data), reinterpret_cast<fftw_complex*>(data)); }

 private:
  std::size_t n_;
  fftw_complex* buffer_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

double wavenumber(const UniformGrid& grid, int axis, int j) {
  const int N = grid.points[axis];
  const int m = j <= N / 2 ? j : j - N;
  return 2.0 * std::numbers::pi * m / grid.length[axis];
}

std::vector<double> k_squared(const UniformGrid& grid) {
  std::vector<double> k2(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto idx = grid.unflatten(i);
    double s = 0.0;
    for (int a = 0; a < grid.dimension(); ++a) s += std::pow(wavenumber(grid, a, idx[a]), 2);
    k2[i] = s;
  }
  return k2;
}

double max_k_squared(const UniformGrid& grid) {
  double s = 0.0;
  for (int a = 0; a < grid.dimension(); ++a) s += std::pow(std::numbers::pi * grid.points[a] / grid.length[a], 2);
  return s;
}

std::vector<double> sample_real(const UniformGrid& grid, const PotentialField& f) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f(grid.point(i));
  return v;
}

}  // namespace

double default_split_step(const UniformGrid& grid, double hbar, const ControlSignal& u, double T) {
  double shortest = T;
  for (std::size_t k = 0; k + 1 < u.breakpoints.size(); ++k) {
    const double a = std::min(u.breakpoints[k], T), b = std::min(u.breakpoints[k + 1], T);
    if (b > a) shortest = std::min(shortest, b - a);
  }
  const double cap = 2.0 * std::numbers::pi / (8.0 * 0.5 * hbar * max_k_squared(grid));
  return std::min(shortest / 64.0, cap);
}

double high_mode_fraction(const WaveGrid& psi) {
  const UniformGrid& g = psi.grid;
  std::vector<cplx> hat = psi.values;
  FourierPair fft(g);
  fft.forward(hat.data());
  double total = 0.0, high = 0.0;
  for (std::size_t i = 0; i < hat.size(); ++i) {
    const double m = std::norm(hat[i]);
    total += m;
    const auto idx = g.unflatten(i);
    bool top = false;
    for (int a = 0; a < g.dimension(); ++a) {
      const int N = g.points[a];
      const int mode = std::abs(idx[a] <= N / 2 ? idx[a] : idx[a] - N);
      if (mode > 0.9 * (N / 2)) top = true;
    }
    if (top) high += m;
  }
  return total > 0.0 ? high / total : 0.0;
}

double boundary_mass(const WaveGrid& psi) {
  const UniformGrid& g = psi.grid;
  double m = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const auto idx = g.unflatten(i);
    bool edge = false;
    for (int a = 0; a < g.dimension(); ++a) {
      const double frac = (idx[a] + 0.5) / g.points[a];
      if (frac < 0.1 || frac > 0.9) edge = true;
    }
    if (edge) m += std::norm(psi.values[i]);
  }
  return m * g.cell_volume();
}

SplitStepResult split_step_run(const WaveGrid& psi0, const PotentialField& V, const PotentialField& W,
                               const ControlSignal& u, const std::vector<double>& sample_times,
                               const SplitStepOptions& options) {
  u.validate();
  require(u.channels() == 1, ErrorCode::InvalidArgument, "split-step takes a single control channel");
  require(!sample_times.empty() && std::is_sorted(sample_times.begin(), sample_times.end()) &&
              sample_times.front() >= 0.0,
          ErrorCode::InvalidArgument, "sample times must be sorted and nonnegative");
  require(psi0.values.size() == psi0.grid.size(), ErrorCode::GridMismatch, "values do not match the grid size");
  const UniformGrid& grid = psi0.grid;
  const double hb = psi0.hbar;
  const double T = sample_times.back();
  const double dt = options.dt > 0.0 ? options.dt : default_split_step(grid, hb, u, T);

  if (options.check_resolution && high_mode_fraction(psi0) > 1e-8)
    fail(ErrorCode::GridTooCoarse, "initial state occupies the top 10% of Fourier modes");

  const std::vector<double> Vg = sample_real(grid, V);
  const std::vector<double> Wg = sample_real(grid, W);
  const std::vector<double> k2 = k_squared(grid);
  const double inv_n = 1.0 / static_cast<double>(grid.size());

  // Segment ends: control breakpoints and sample times.
  std::vector<double> cuts{0.0};
  for (double b : u.breakpoints)
    if (b > 0.0 && b < T) cuts.push_back(b);
  for (double s : sample_times)
    if (s > 0.0) cuts.push_back(s);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  SplitStepResult res;
  res.times = sample_times;
  FourierPair fft(grid);
  std::vector<cplx> psi = psi0.values;
  std::vector<cplx> half(grid.size()), full(grid.size()), kin(grid.size());
  std::size_t next_sample = 0;
  const auto record = [&](double t) {
    while (next_sample < sample_times.size() && sample_times[next_sample] <= t) {
      WaveGrid w(grid, psi, hb);
      const double bm = boundary_mass(w);
      res.max_boundary_mass = std::max(res.max_boundary_mass, bm);
      if (bm > 1e-8) res.boundary_flag = true;
      res.states.push_back(std::move(w));
      ++next_sample;
    }
  };
  record(0.0);
  double last_h = -1.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = cuts[c], b = cuts[c + 1];
    const int steps = std::max(1, static_cast<int>(std::ceil((b - a) / dt - 1e-9)));
    const double h = (b - a) / steps;
    const double uk = u.value_at(0.5 * (a + b))[0];
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double vt = Vg[i] + uk * Wg[i];
      half[i] = std::exp(cplx(0.0, -0.5 * vt * h / hb));
      full[i] = half[i] * half[i];
    }
    if (h != last_h) {
      for (std::size_t i = 0; i < grid.size(); ++i) kin[i] = std::exp(cplx(0.0, -0.5 * hb * k2[i] * h)) * inv_n;
      last_h = h;
    }
    for (std::size_t i = 0; i < grid.size(); ++i) psi[i] *= half[i];
    for (int s = 0; s < steps; ++s) {
      fft.forward(psi.data());
      for (std::size_t i = 0; i < grid.size(); ++i) psi[i] *= kin[i];
      fft.backward(psi.data());
      const auto& pot = s + 1 == steps ? half : full;
      for (std::size_t i = 0; i < grid.size(); ++i) psi[i] *= pot[i];
    }
    res.steps += steps;
    res.dt_used = std::max(res.dt_used, h);
    record(b);
  }
  if (options.check_resolution && high_mode_fraction(res.states.back()) > 1e-8)
    fail(ErrorCode::GridTooCoarse, "evolved state occupies the top 10% of Fourier modes");
  return res;
}

WaveGrid split_step_evolve(const WaveGrid& psi0, const PotentialField& V, const PotentialField& W,
                           const ControlSignal& u, double T, double dt) {
  require(T >= 0.0, ErrorCode::InvalidArgument, "evolution time must be nonnegative");
  SplitStepOptions opt;
  opt.dt = dt;
  return std::move(split_step_run(psi0, V, W, u, {T}, opt).states.back());
}

double region_probability(const WaveGrid& psi, const BoxRegion& region) {
  const UniformGrid& g = psi.grid;
  region.validate(g.dimension());
  double m = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const Vec x = g.point(i);
    double w = 1.0;
    for (std::size_t k = 0; k < region.axes.size() && w > 0.0; ++k) {
      const double v = x[region.axes[k]];
      const double lo = region.lower[k], hi = region.upper[k];
      const double tol = 1e-12 * (1.0 + std::abs(v));
      if (std::abs(v - lo) <= tol || std::abs(v - hi) <= tol)
        w *= 0.5;
      else if (!(v > lo && v < hi))
        w = 0.0;
    }
    m += w * std::norm(psi.values[i]);
  }
  return m * g.cell_volume();
}

double l2_distance(const UniformGrid& grid, const std::vector<cplx>& psi, const std::vector<cplx>& phi) {
  require(psi.size() == grid.size() && phi.size() == grid.size(), ErrorCode::GridMismatch,
          "states do not match the grid");
  double s = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) s += std::norm(psi[i] - phi[i]);
  return std::sqrt(s * grid.cell_volume());
}

double l2_distance(const WaveGrid& psi, const WaveGrid& phi) {
  require(psi.grid.same_as(phi.grid), ErrorCode::GridMismatch, "states live on different grids");
  return l2_distance(psi.grid, psi.values, phi.values);
}

void write_wave_csv(std::ostream& out, const WaveGrid& psi) {
  const int n = psi.grid.dimension();
  for (int a = 0; a < n; ++a) out << 'x' << (a + 1) << ',';
  out << "re,im\n";
  char buf[64];
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const Vec x = psi.grid.point(i);
    for (int a = 0; a < n; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g,", x[a]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", psi.values[i].real(), psi.values[i].imag());
    out << buf;
  }
}

WaveGrid read_wave_csv(std::istream& in, double hbar) {
  std::string line;
  std::vector<std::vector<double>> rows;
  int columns = -1;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      columns = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
      require(columns == 3 || columns == 4, ErrorCode::ParseError, "wave CSV needs 3 or 4 columns");
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorCode::ParseError, "bad number on line " + std::to_string(lineno));
      }
    }
    require(static_cast<int>(row.size()) == columns, ErrorCode::ParseError,
            "wrong column count on line " + std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorCode::ParseError, "wave CSV has no data rows");
  const int dim = columns - 2;
  UniformGrid g;
  for (int a = 0; a < dim; ++a) {
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r[a]);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    require(c.size() >= 2, ErrorCode::ParseError, "axis needs at least two coordinates");
    const double h = (c.back() - c.front()) / (c.size() - 1);
    g.lower.push_back(c.front());
    g.length.push_back(h * c.size());
    g.points.push_back(static_cast<int>(c.size()));
  }
  require(g.size() == rows.size(), ErrorCode::ParseError, "rows do not form a tensor grid");
  std::vector<cplx> v(g.size());
  std::vector<char> seen(g.size(), 0);
  for (const auto& r : rows) {
    std::vector<int> idx(dim);
    for (int a = 0; a < dim; ++a) {
      const double s = (r[a] - g.lower[a]) / g.spacing(a);
      idx[a] = static_cast<int>(std::lround(s));
      require(std::abs(s - idx[a]) < 1e-6 && idx[a] >= 0 && idx[a] < g.points[a], ErrorCode::ParseError,
              "coordinates are not uniformly spaced");
    }
    const std::size_t f = g.flatten(idx);
    require(!seen[f], ErrorCode::ParseError, "duplicate grid point");
    seen[f] = 1;
    v[f] = cplx(r[dim], r[dim + 1]);
  }
  return WaveGrid(g, std::move(v), hbar);
}

}  // namespace sclab
