#include "sclab/registry.hpp"

#include "sclab/error.hpp"

#include <algorithm>
#include <cmath>

namespace sclab {

namespace {

double n1_norm(const Vec& v, const std::vector<int>& n1_axes) {
  double s = 0.0;
  for (int a : n1_axes) s += v[a] * v[a];
  return std::sqrt(s);
}

bool in_axes(const std::vector<int>& axes, int a) {
  return std::find(axes.begin(), axes.end(), a) != axes.end();
}

void check_axes(const std::vector<int>& axes, int dimension) {
  for (int a : axes) {
    require(a >= 0 && a < dimension, ErrorCode::InvalidArgument, "axis index out of range");
  }
}

}  // namespace

PotentialField zero_potential(int dimension) { return constant_potential(dimension, 0.0); }

PotentialField constant_potential(int dimension, double value) {
  require(dimension > 0, ErrorCode::InvalidArgument, "dimension must be positive");
  PotentialField f;
  f.name = value == 0.0 ? "zero" : "constant";
  f.value = [value](const Vec&) { return value; };
  f.gradient = [dimension](const Vec&) -> Vec { return Vec::Zero(dimension); };
  f.hessian = [dimension](const Vec&) -> Mat { return Mat::Zero(dimension, dimension); };
  f.fibre_bound = [](const Vec&) { return 0.0; };
  return f;
}

PotentialField harmonic_potential(double k, Vec center, const std::vector<int>& n1_axes) {
  const int n = static_cast<int>(center.size());
  check_axes(n1_axes, n);
  PotentialField f;
  f.name = "harmonic";
  f.value = [k, center](const Vec& x) { return 0.5 * k * (x - center).squaredNorm(); };
  f.gradient = [k, center](const Vec& x) -> Vec { return k * (x - center); };
  f.hessian = [k, n](const Vec&) -> Mat { return k * Mat::Identity(n, n); };
  if (!n1_axes.empty()) {
    f.fibre_bound = [k, center, n1_axes](const Vec& x) { return std::abs(k) * n1_norm(x - center, n1_axes); };
  }
  return f;
}

PotentialField linear_potential(Vec slope, double offset, const std::vector<int>& n1_axes) {
  const int n = static_cast<int>(slope.size());
  check_axes(n1_axes, n);
  PotentialField f;
  f.name = "linear";
  f.value = [slope, offset](const Vec& x) { return slope.dot(x) + offset; };
  f.gradient = [slope](const Vec&) -> Vec { return slope; };
  f.hessian = [n](const Vec&) -> Mat { return Mat::Zero(n, n); };
  if (!n1_axes.empty()) {
    const double c = n1_norm(slope, n1_axes);
    f.fibre_bound = [c](const Vec&) { return c; };
  }
  return f;
}

PotentialField gaussian_potential(double amplitude, double width, Vec center,
                                  const std::vector<int>& n1_axes) {
  require(width > 0.0, ErrorCode::InvalidArgument, "gaussian width must be positive");
  const int n = static_cast<int>(center.size());
  check_axes(n1_axes, n);
  const double s2 = width * width;
  PotentialField f;
  f.name = "gaussian";
  f.value = [=](const Vec& x) { return amplitude * std::exp(-(x - center).squaredNorm() / (2.0 * s2)); };
  f.gradient = [=](const Vec& x) -> Vec {
    const Vec d = x - center;
    return -amplitude / s2 * std::exp(-d.squaredNorm() / (2.0 * s2)) * d;
  };
  f.hessian = [=](const Vec& x) -> Mat {
    const Vec d = x - center;
    const double e = amplitude * std::exp(-d.squaredNorm() / (2.0 * s2));
    return e / s2 * (d * d.transpose() / s2 - Mat::Identity(n, n));
  };
  if (!n1_axes.empty()) {
    f.fibre_bound = [=](const Vec& x) {
      Vec d1 = Vec::Zero(n);
      for (int a : n1_axes) d1[a] = x[a] - center[a];
      const double r = d1.norm();
      return std::abs(amplitude) * r / s2 * std::exp(-r * r / (2.0 * s2));
    };
  }
  return f;
}

PotentialField cosine_potential(double amplitude, Vec wavenumber, double phase,
                                const std::vector<int>& n1_axes) {
  const int n = static_cast<int>(wavenumber.size());
  check_axes(n1_axes, n);
  PotentialField f;
  f.name = "cosine";
  f.value = [=](const Vec& x) { return amplitude * std::cos(wavenumber.dot(x) + phase); };
  f.gradient = [=](const Vec& x) -> Vec {
    return -amplitude * std::sin(wavenumber.dot(x) + phase) * wavenumber;
  };
  f.hessian = [=](const Vec& x) -> Mat {
    return -amplitude * std::cos(wavenumber.dot(x) + phase) * (wavenumber * wavenumber.transpose());
  };
  if (!n1_axes.empty()) {
    const double c = std::abs(amplitude) * n1_norm(wavenumber, n1_axes);
    f.fibre_bound = [c](const Vec&) { return c; };
  }
  return f;
}

PotentialField polynomial_potential(int dimension, int axis, std::vector<double> coeffs,
                                    const std::vector<int>& n1_axes) {
  require(axis >= 0 && axis < dimension, ErrorCode::InvalidArgument, "polynomial axis out of range");
  check_axes(n1_axes, dimension);
  if (coeffs.empty()) coeffs.push_back(0.0);
  auto horner = [](const std::vector<double>& c, double s) {
    double v = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * s + *it;
    return v;
  };
  std::vector<double> d1, d2;
  for (std::size_t k = 1; k < coeffs.size(); ++k) d1.push_back(static_cast<double>(k) * coeffs[k]);
  for (std::size_t k = 1; k < d1.size(); ++k) d2.push_back(static_cast<double>(k) * d1[k]);
  PotentialField f;
  f.name = "polynomial";
  f.value = [=](const Vec& x) { return horner(coeffs, x[axis]); };
  f.gradient = [=](const Vec& x) -> Vec {
    Vec g = Vec::Zero(dimension);
    g[axis] = horner(d1, x[axis]);
    return g;
  };
  f.hessian = [=](const Vec& x) -> Mat {
    Mat h = Mat::Zero(dimension, dimension);
    h(axis, axis) = horner(d2, x[axis]);
    return h;
  };
  if (!n1_axes.empty()) {
    if (in_axes(n1_axes, axis)) {
      f.fibre_bound = [=](const Vec& x) { return std::abs(horner(d1, x[axis])); };
    } else {
      f.fibre_bound = [](const Vec&) { return 0.0; };
    }
  }
  return f;
}

PotentialField tilted_cosine_potential(int dimension, double slope, int axis_a, double wavenumber,
                                       int axis_b, double phase, const std::vector<int>& n1_axes) {
  require(axis_a >= 0 && axis_a < dimension && axis_b >= 0 && axis_b < dimension,
          ErrorCode::InvalidArgument, "tilted-cosine axis out of range");
  require(axis_a != axis_b, ErrorCode::InvalidArgument, "tilted-cosine needs two distinct axes");
  check_axes(n1_axes, dimension);
  PotentialField f;
  f.name = "tilted-cosine";
  f.value = [=](const Vec& x) { return slope * x[axis_a] * std::cos(wavenumber * x[axis_b] + phase); };
  f.gradient = [=](const Vec& x) -> Vec {
    const double arg = wavenumber * x[axis_b] + phase;
    Vec g = Vec::Zero(dimension);
    g[axis_a] = slope * std::cos(arg);
    g[axis_b] = -slope * wavenumber * x[axis_a] * std::sin(arg);
    return g;
  };
  f.hessian = [=](const Vec& x) -> Mat {
    const double arg = wavenumber * x[axis_b] + phase;
    Mat h = Mat::Zero(dimension, dimension);
    h(axis_a, axis_b) = h(axis_b, axis_a) = -slope * wavenumber * std::sin(arg);
    h(axis_b, axis_b) = -slope * wavenumber * wavenumber * x[axis_a] * std::cos(arg);
    return h;
  };
  const bool a1 = in_axes(n1_axes, axis_a);
  const bool b1 = in_axes(n1_axes, axis_b);
  if (!n1_axes.empty()) {
    if (a1 && !b1) {
      const double c = std::abs(slope);
      f.fibre_bound = [c](const Vec&) { return c; };
    } else if (a1 && b1) {
      f.fibre_bound = [=](const Vec& x) { return std::abs(slope) * std::hypot(1.0, wavenumber * x[axis_a]); };
    } else if (!a1 && !b1) {
      f.fibre_bound = [](const Vec&) { return 0.0; };
    }
    // a in N2, b in N1: d_1 V grows with the fibre coordinate, no finite bound.
  }
  return f;
}

PotentialField sum_potential(const std::vector<PotentialField>& terms) {
  require(!terms.empty(), ErrorCode::InvalidArgument, "sum of zero potentials");
  PotentialField f;
  f.name = "sum";
  f.value = [terms](const Vec& x) {
    double v = 0.0;
    for (const auto& t : terms) v += t.value(x);
    return v;
  };
  f.gradient = [terms](const Vec& x) -> Vec {
    Vec g = terms.front().gradient(x);
    for (std::size_t i = 1; i < terms.size(); ++i) g += terms[i].gradient(x);
    return g;
  };
  f.hessian = [terms](const Vec& x) -> Mat {
    Mat h = terms.front().hess(x);
    for (std::size_t i = 1; i < terms.size(); ++i) h += terms[i].hess(x);
    return h;
  };
  const bool bounded = std::all_of(terms.begin(), terms.end(),
                                   [](const PotentialField& t) { return static_cast<bool>(t.fibre_bound); });
  if (bounded) {
    f.fibre_bound = [terms](const Vec& x) {
      double c = 0.0;
      for (const auto& t : terms) c += t.fibre_bound(x);
      return c;
    };
  }
  return f;
}

PotentialField scaled_potential(const PotentialField& base, double scale) {
  PotentialField f;
  f.name = base.name;
  f.value = [base, scale](const Vec& x) { return scale * base.value(x); };
  f.gradient = [base, scale](const Vec& x) -> Vec { return scale * base.gradient(x); };
  f.hessian = [base, scale](const Vec& x) -> Mat { return scale * base.hess(x); };
  if (base.fibre_bound) {
    f.fibre_bound = [base, scale](const Vec& x) { return std::abs(scale) * base.fibre_bound(x); };
  }
  f.norm_factor = base.norm_factor;
  return f;
}

namespace {

struct ParamReader {
  const std::string& kind;
  const ParamMap& params;
  int dimension;

  double scalar(const std::string& key, double fallback) const {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    require(it->second.size() == 1, ErrorCode::ValidationError,
            kind + "." + key + " expects a single number");
    return it->second.front();
  }
  int index(const std::string& key, int fallback) const {
    const double v = scalar(key, fallback);
    require(v == std::floor(v) && v >= 0 && v < dimension, ErrorCode::ValidationError,
            kind + "." + key + " must be an axis index below the dimension");
    return static_cast<int>(v);
  }
  // Scalars broadcast to every axis.
  Vec vector(const std::string& key, double fallback) const {
    auto it = params.find(key);
    if (it == params.end()) return Vec::Constant(dimension, fallback);
    if (it->second.size() == 1) return Vec::Constant(dimension, it->second.front());
    require(static_cast<int>(it->second.size()) == dimension, ErrorCode::ValidationError,
            kind + "." + key + " must have one entry per axis");
    return Eigen::Map<const Vec>(it->second.data(), dimension);
  }
  std::vector<double> list(const std::string& key) const {
    auto it = params.find(key);
    return it == params.end() ? std::vector<double>{} : it->second;
  }
};

const std::map<std::string, std::vector<std::string>>& registry_keys() {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"zero", {}},
      {"constant", {"value"}},
      {"harmonic", {"k", "center"}},
      {"linear", {"slope", "offset"}},
      {"gaussian", {"amplitude", "width", "center"}},
      {"cosine", {"amplitude", "wavenumber", "phase"}},
      {"polynomial", {"axis", "coeffs"}},
      {"custom-polynomial", {"axis", "coeffs"}},
      {"tilted-cosine", {"slope", "axis_a", "wavenumber", "axis_b", "phase"}},
  };
  return keys;
}

}  // namespace

std::vector<std::string> potential_names() {
  std::vector<std::string> names;
  for (const auto& [name, keys] : registry_keys()) names.push_back(name);
  return names;
}

std::vector<std::string> potential_parameters(const std::string& name) {
  auto it = registry_keys().find(name);
  require(it != registry_keys().end(), ErrorCode::ValidationError, "unknown potential '" + name + "'");
  return it->second;
}

PotentialField make_potential(const std::string& name, const ParamMap& params, int dimension,
                              const std::vector<int>& n1_axes) {
  const auto allowed = potential_parameters(name);
  for (const auto& [key, value] : params) {
    require(std::find(allowed.begin(), allowed.end(), key) != allowed.end(), ErrorCode::ValidationError,
            "potential '" + name + "' has no parameter '" + key + "'");
  }
  const ParamReader r{name, params, dimension};
  if (name == "zero") return zero_potential(dimension);
  if (name == "constant") return constant_potential(dimension, r.scalar("value", 1.0));
  if (name == "harmonic") return harmonic_potential(r.scalar("k", 1.0), r.vector("center", 0.0), n1_axes);
  if (name == "linear") return linear_potential(r.vector("slope", 1.0), r.scalar("offset", 0.0), n1_axes);
  if (name == "gaussian") {
    return gaussian_potential(r.scalar("amplitude", 1.0), r.scalar("width", 1.0), r.vector("center", 0.0),
                              n1_axes);
  }
  if (name == "cosine") {
    return cosine_potential(r.scalar("amplitude", 1.0), r.vector("wavenumber", 1.0), r.scalar("phase", 0.0),
                            n1_axes);
  }
  if (name == "polynomial" || name == "custom-polynomial") {
    return polynomial_potential(dimension, r.index("axis", 0), r.list("coeffs"), n1_axes);
  }
  // tilted-cosine
  require(dimension >= 2, ErrorCode::ValidationError, "tilted-cosine needs at least two axes");
  return tilted_cosine_potential(dimension, r.scalar("slope", 1.0), r.index("axis_a", 0),
                                 r.scalar("wavenumber", 1.0), r.index("axis_b", 1), r.scalar("phase", 0.0),
                                 n1_axes);
}

}  // namespace sclab
