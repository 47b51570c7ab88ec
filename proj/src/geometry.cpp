#include "sclab/geometry.hpp"

#include "sclab/error.hpp"

#include <cmath>
#include <sstream>

namespace sclab {

Vec PhasePoint::stacked() const {
  Vec y(x.size() + p.size());
  y << x, p;
  return y;
}

PhasePoint PhasePoint::from_stacked(const Vec& y) {
  const auto n = y.size() / 2;
  return {y.head(n), y.tail(n)};
}

ChartSpace ChartSpace::flat(std::vector<double> periods) {
  const int n = static_cast<int>(periods.size());
  ChartSpace space(
      std::move(periods), [n](const Vec&) -> Mat { return Mat::Identity(n, n); },
      [n](const Vec&) { return std::vector<Mat>(n, Mat::Zero(n, n)); });
  space.flat_ = true;
  return space;
}

ChartSpace::ChartSpace(std::vector<double> periods, CometricFn cometric,
                       CometricDerivativeFn derivative)
    : periods_(std::move(periods)), cometric_(std::move(cometric)), derivative_(std::move(derivative)) {
  require(!periods_.empty(), ErrorCode::InvalidChart, "chart dimension must be positive");
  for (double L : periods_) {
    require(std::isfinite(L) && L >= 0.0, ErrorCode::InvalidChart, "circle period must be finite and >= 0");
  }
  require(static_cast<bool>(cometric_) && static_cast<bool>(derivative_), ErrorCode::InvalidChart,
          "cometric and derivative callbacks are required");
}

Mat ChartSpace::cometric(const Vec& x) const { return cometric_(x); }

std::vector<Mat> ChartSpace::cometric_derivative(const Vec& x) const { return derivative_(x); }

std::vector<std::vector<Mat>> ChartSpace::cometric_second_derivative(const Vec& x) const {
  const int n = dimension();
  std::vector<std::vector<Mat>> second(n, std::vector<Mat>(n, Mat::Zero(n, n)));
  if (flat_) return second;
  for (int l = 0; l < n; ++l) {
    const double h = fd_step(x[l]);
    Vec xp = x, xm = x;
    xp[l] += h;
    xm[l] -= h;
    const auto dp = derivative_(xp);
    const auto dm = derivative_(xm);
    for (int k = 0; k < n; ++k) second[k][l] = (dp[k] - dm[k]) / (2.0 * h);
  }
  // Symmetrize in (k, l).
  for (int k = 0; k < n; ++k) {
    for (int l = k + 1; l < n; ++l) {
      Mat avg = 0.5 * (second[k][l] + second[l][k]);
      second[k][l] = avg;
      second[l][k] = avg;
    }
  }
  return second;
}

Vec ChartSpace::wrap(const Vec& x) const {
  Vec out = x;
  for (int i = 0; i < dimension(); ++i) {
    const double L = periods_[i];
    if (L > 0.0) {
      double r = std::fmod(out[i], L);
      if (r < 0.0) r += L;
      if (r >= L) r = 0.0;
      out[i] = r;
    }
  }
  return out;
}

ChartSpace& ChartSpace::set_product_split(ProductSplit split) {
  std::vector<int> seen(dimension(), 0);
  auto mark = [&](const std::vector<int>& axes) {
    for (int a : axes) {
      require(a >= 0 && a < dimension(), ErrorCode::InvalidChart, "product split axis out of range");
      ++seen[a];
    }
  };
  mark(split.n1_axes);
  mark(split.n2_axes);
  for (int s : seen) {
    require(s == 1, ErrorCode::InvalidChart, "product split must partition the chart axes exactly");
  }
  require(!split.n1_axes.empty(), ErrorCode::InvalidChart, "product split needs at least one N1 axis");
  split_ = std::move(split);
  return *this;
}

void ChartSpace::validate(std::span<const Vec> samples) const {
  const int n = dimension();
  for (const Vec& x : samples) {
    const Mat g = cometric_at(*this, x);
    const auto d = derivative_(x);
    require(static_cast<int>(d.size()) == n, ErrorCode::InvalidChart, "derivative callback has wrong arity");
    for (int k = 0; k < n; ++k) {
      const double h = fd_step(x[k]);
      Vec xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const Mat fd = (cometric_(xp) - cometric_(xm)) / (2.0 * h);
      const double scale = std::max(1.0, d[k].cwiseAbs().maxCoeff());
      const double err = (fd - d[k]).cwiseAbs().maxCoeff();
      if (err > 1e-6 * scale) {
        std::ostringstream msg;
        msg << "cometric derivative along axis " << k << " disagrees with central differences by " << err;
        fail(ErrorCode::InvalidChart, msg.str());
      }
    }
    (void)g;
  }
}

Mat PotentialField::hess(const Vec& x) const {
  if (hessian) return hessian(x);
  const auto n = x.size();
  Mat H(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = fd_step(x[k]);
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    H.col(k) = (gradient(xp) - gradient(xm)) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

void PotentialField::validate(std::span<const Vec> samples) const {
  require(static_cast<bool>(value) && static_cast<bool>(gradient), ErrorCode::InvalidArgument,
          "potential '" + name + "' needs value and gradient callbacks");
  for (const Vec& x : samples) {
    const Vec g = gradient(x);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double h = fd_step(x[k]);
      Vec xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fd = (value(xp) - value(xm)) / (2.0 * h);
      const double scale = std::max(1.0, std::abs(g[k]));
      if (std::abs(fd - g[k]) > 1e-6 * scale) {
        std::ostringstream msg;
        msg << "gradient of '" << name << "' along axis " << k << " disagrees with central differences ("
            << g[k] << " vs " << fd << ")";
        fail(ErrorCode::InvalidArgument, msg.str());
      }
    }
    if (fibre_bound) {
      require(fibre_bound(x) >= 0.0, ErrorCode::InvalidArgument, "fibre bound c(x) must be nonnegative");
    }
    if (norm_factor) {
      require(norm_factor(x) >= 0.0, ErrorCode::InvalidArgument, "norm factor K(x) must be nonnegative");
    }
  }
}

Mat cometric_at(const ChartSpace& space, const Vec& x) {
  require(x.size() == space.dimension(), ErrorCode::InvalidChart, "position has wrong dimension");
  const Mat g = space.cometric(x);
  require(g.rows() == space.dimension() && g.cols() == space.dimension(), ErrorCode::InvalidChart,
          "cometric callback returned a matrix of the wrong size");
  require(g.allFinite(), ErrorCode::InvalidChart, "cometric has non-finite entries");
  const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()), ErrorCode::MetricDegenerate,
          "cometric is not symmetric");
  Eigen::LLT<Mat> llt(g);
  require(llt.info() == Eigen::Success, ErrorCode::MetricDegenerate, "cometric is not positive definite");
  return g;
}

Vec riemannian_gradient(const ChartSpace& space, const PotentialField& f, const Vec& x) {
  if (space.is_flat()) return f.grad(x);
  return cometric_at(space, x) * f.grad(x);
}

double covector_norm(const ChartSpace& space, const Vec& x, const Vec& p) {
  if (space.is_flat()) return p.norm();
  return std::sqrt(p.dot(space.cometric(x) * p));
}

double kinetic_energy(const ChartSpace& space, const PhasePoint& point) {
  const double n = covector_norm(space, point.x, point.p);
  return 0.5 * n * n;
}

void kinetic_rhs(const ChartSpace& space, const Vec& x, const Vec& p, Vec& xdot, Vec& pdot) {
  if (space.is_flat()) {
    xdot = p;
    pdot.setZero(p.size());
    return;
  }
  xdot = space.cometric(x) * p;
  const auto d = space.cometric_derivative(x);
  pdot.resize(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) pdot[i] = -0.5 * p.dot(d[i] * p);
}

PhasePoint geodesic_endpoint(const ChartSpace& space, const Vec& x0, const Vec& p0, double t,
                             double step) {
  require(t >= 0.0, ErrorCode::InvalidArgument, "geodesic duration must be nonnegative");
  require(step > 0.0, ErrorCode::InvalidArgument, "step must be positive");
  require(x0.size() == space.dimension() && p0.size() == space.dimension(), ErrorCode::InvalidChart,
          "initial point has wrong dimension");
  const auto n = x0.size();
  const Rhs rhs = [&space, n](double, const Vec& y, Vec& dy) {
    Vec xd, pd;
    kinetic_rhs(space, y.head(n), y.tail(n), xd, pd);
    dy.head(n) = xd;
    dy.tail(n) = pd;
  };
  Vec y0(2 * n);
  y0 << x0, p0;
  const auto result = integrate_checked(rhs, 0.0, y0, t, step);
  PhasePoint end = PhasePoint::from_stacked(result.y);
  end.x = space.wrap(end.x);
  return end;
}

}  // namespace sclab
