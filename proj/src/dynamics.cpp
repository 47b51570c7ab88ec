#include "sclab/dynamics.hpp"

#include "sclab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace sclab {

ControlSignal ControlSignal::constant(double u, double duration) {
  return constant(Vec::Constant(1, u), duration);
}

ControlSignal ControlSignal::constant(const Vec& u, double duration) {
  ControlSignal c{{0.0, duration}, u.transpose()};
  c.validate();
  return c;
}

ControlSignal ControlSignal::piecewise(std::vector<double> breakpoints, const std::vector<double>& values) {
  Mat m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
  return piecewise_tuple(std::move(breakpoints), std::move(m));
}

ControlSignal ControlSignal::piecewise_tuple(std::vector<double> breakpoints, Mat values) {
  ControlSignal c{std::move(breakpoints), std::move(values)};
  c.validate();
  return c;
}

void ControlSignal::validate() const {
  require(breakpoints.size() >= 2, ErrorCode::InvalidArgument, "control needs at least one interval");
  require(breakpoints.front() == 0.0, ErrorCode::InvalidArgument, "control must start at t = 0");
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    require(std::isfinite(breakpoints[i + 1]) && breakpoints[i + 1] > breakpoints[i], ErrorCode::InvalidArgument,
            "control breakpoints must be finite and strictly increasing");
  }
  require(static_cast<std::size_t>(values.rows()) + 1 == breakpoints.size(), ErrorCode::InvalidArgument,
          "control needs exactly one value per interval");
  require(values.cols() >= 1, ErrorCode::InvalidArgument, "control needs at least one channel");
  require(values.allFinite(), ErrorCode::InvalidArgument, "control values must be finite");
}

Vec ControlSignal::value_at(double t) const {
  if (t < 0.0 || t > duration()) return Vec::Zero(channels());
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
  auto k = static_cast<Eigen::Index>(it - breakpoints.begin()) - 1;
  k = std::clamp<Eigen::Index>(k, 0, values.rows() - 1);
  return values.row(k).transpose();
}

Vec ControlSignal::integral(double t) const {
  Vec acc = Vec::Zero(channels());
  for (int k = 0; k < intervals(); ++k) {
    const double a = breakpoints[k];
    const double b = std::min(breakpoints[k + 1], t);
    if (b <= a) break;
    acc += (b - a) * values.row(k).transpose();
  }
  return acc;
}

double ControlSignal::max_abs() const { return values.cwiseAbs().maxCoeff(); }

ControlSignal ControlSignal::concat(const ControlSignal& first, const ControlSignal& second) {
  require(first.channels() == second.channels(), ErrorCode::InvalidArgument,
          "cannot concatenate controls with different channel counts");
  ControlSignal out;
  out.breakpoints = first.breakpoints;
  const double shift = first.duration();
  for (std::size_t i = 1; i < second.breakpoints.size(); ++i) out.breakpoints.push_back(second.breakpoints[i] + shift);
  out.values.resize(first.values.rows() + second.values.rows(), first.channels());
  out.values << first.values, second.values;
  out.validate();
  return out;
}

HamiltonianSpec::HamiltonianSpec(ChartSpace space_, PotentialField V_, PotentialField W_)
    : HamiltonianSpec(std::move(space_), std::move(V_), std::vector<PotentialField>{std::move(W_)}) {}

HamiltonianSpec::HamiltonianSpec(ChartSpace space_, PotentialField V_, std::vector<PotentialField> W_)
    : space(std::move(space_)), V(std::move(V_)), W(std::move(W_)) {
  require(!W.empty(), ErrorCode::InvalidArgument, "at least one control potential is required");
  require(static_cast<bool>(V.value) && static_cast<bool>(V.gradient), ErrorCode::InvalidArgument,
          "drift potential is incomplete");
  for (const auto& w : W) {
    require(static_cast<bool>(w.value) && static_cast<bool>(w.gradient), ErrorCode::InvalidArgument,
            "control potential is incomplete");
  }
}

double hamiltonian(const HamiltonianSpec& spec, const PhasePoint& point, double u) {
  return hamiltonian(spec, point, Vec::Constant(spec.channels(), u));
}

double hamiltonian(const HamiltonianSpec& spec, const PhasePoint& point, const Vec& u) {
  require(u.size() == spec.channels(), ErrorCode::InvalidArgument, "control tuple has wrong size");
  cometric_at(spec.space, point.x);
  double h = kinetic_energy(spec.space, point) + spec.V(point.x);
  for (int k = 0; k < spec.channels(); ++k) h += u[k] * spec.W[k](point.x);
  return h;
}

namespace {

Vec force(const HamiltonianSpec& spec, const Vec& x, const Vec& u) {
  Vec f = -spec.V.grad(x);
  for (int k = 0; k < spec.channels(); ++k) {
    if (u[k] != 0.0) f -= u[k] * spec.W[k].grad(x);
  }
  return f;
}

void check_tuple(const HamiltonianSpec& spec, const ControlSignal& u) {
  u.validate();
  require(u.channels() == spec.channels(), ErrorCode::InvalidArgument,
          "control channel count does not match the number of control potentials");
}

void check_start(const HamiltonianSpec& spec, const PhasePoint& start) {
  require(start.x.size() == spec.dimension() && start.p.size() == spec.dimension(), ErrorCode::InvalidChart,
          "initial state has wrong dimension");
  require(start.x.allFinite() && start.p.allFinite(), ErrorCode::InvalidArgument, "initial state must be finite");
}

// Intervals [a, b) with their control tuple; clipped to [0, T] and padded with
// zero control beyond the control duration.
struct Piece {
  double a, b;
  Vec u;
};

std::vector<Piece> pieces(const ControlSignal& u, double T) {
  std::vector<Piece> out;
  for (int k = 0; k < u.intervals(); ++k) {
    const double a = u.breakpoints[k];
    const double b = std::min(u.breakpoints[k + 1], T);
    if (b <= a) break;
    out.push_back({a, b, u.values.row(k).transpose()});
  }
  if (T > u.duration()) out.push_back({u.duration(), T, Vec::Zero(u.channels())});
  return out;
}

}  // namespace

Rhs hamiltonian_rhs(const HamiltonianSpec& spec, const Vec& u) {
  const auto n = spec.dimension();
  return [&spec, u, n](double, const Vec& y, Vec& dy) {
    const Vec x = y.head(n);
    Vec xd, pd;
    kinetic_rhs(spec.space, x, y.tail(n), xd, pd);
    dy.head(n) = xd;
    dy.tail(n) = pd + force(spec, x, u);
  };
}

Trajectory evolve(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u, double step,
                  const EvolveOptions& options) {
  check_tuple(spec, u);
  check_start(spec, start);
  require(step > 0.0, ErrorCode::InvalidArgument, "step must be positive");
  Trajectory traj;
  traj.control_used = u;
  traj.times.push_back(0.0);
  traj.states.push_back({spec.space.wrap(start.x), start.p});
  Vec y = start.stacked();
  std::vector<double> ts;
  std::vector<Vec> ys;
  for (const Piece& piece : pieces(u, u.duration())) {
    const Rhs rhs = hamiltonian_rhs(spec, piece.u);
    int steps = steps_for(piece.b - piece.a, step);
    Vec coarse = integrate_fixed(rhs, piece.a, y, piece.b, steps);
    bool accepted = false;
    double mismatch = 0.0;
    for (int level = 0; level <= options.max_refinements; ++level) {
      ts.clear();
      ys.clear();
      Observer obs;
      if (options.record) {
        obs = [&](double t, const Vec& state) {
          ts.push_back(t);
          ys.push_back(state);
        };
      }
      Vec fine = integrate_fixed(rhs, piece.a, y, piece.b, 2 * steps, obs);
      mismatch = relative_mismatch(coarse, fine);
      if (mismatch < kHalvingTolerance) {
        if (!options.record) {
          ts = {piece.b};
          ys = {fine};
        } else {
          ts.erase(ts.begin());
          ys.erase(ys.begin());
        }
        y = fine;
        accepted = true;
        break;
      }
      coarse = std::move(fine);
      steps *= 2;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "step halving failed on control interval [" << piece.a << ", " << piece.b << "], mismatch "
          << mismatch;
      fail(ErrorCode::StepTooCoarse, msg.str());
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
      PhasePoint s = PhasePoint::from_stacked(ys[i]);
      s.x = spec.space.wrap(s.x);
      traj.times.push_back(ts[i]);
      traj.states.push_back(std::move(s));
    }
  }
  return traj;
}

PhasePoint evolve_endpoint(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u,
                           double step) {
  check_tuple(spec, u);
  check_start(spec, start);
  Vec y = start.stacked();
  for (const Piece& piece : pieces(u, u.duration())) {
    y = integrate_checked(hamiltonian_rhs(spec, piece.u), piece.a, y, piece.b, step).y;
  }
  return PhasePoint::from_stacked(y);
}

Mat phase_jacobian(const ChartSpace& space, const Vec& x, const Vec& p, const Mat& potential_hessian) {
  const int n = static_cast<int>(x.size());
  Mat A = Mat::Zero(2 * n, 2 * n);
  if (space.is_flat()) {
    A.topRightCorner(n, n).setIdentity();
  } else {
    const auto dg = space.cometric_derivative(x);
    const auto d2g = space.cometric_second_derivative(x);
    for (int i = 0; i < n; ++i) {
      const Vec dgp = dg[i] * p;
      A.block(0, 0, n, n).col(i) = dgp;               // d xdot / d x_i
      A.block(n, n, n, n).row(i) = -dgp.transpose();  // d pdot_i / d p
      for (int l = 0; l < n; ++l) A(n + i, l) = -0.5 * p.dot(d2g[i][l] * p);
    }
    A.topRightCorner(n, n) = space.cometric(x);
  }
  A.bottomLeftCorner(n, n) -= potential_hessian;
  return A;
}

Mat flow_jacobian(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u, double T,
                  double step) {
  check_tuple(spec, u);
  check_start(spec, start);
  require(T >= 0.0, ErrorCode::InvalidArgument, "flow time must be nonnegative");
  const int n = spec.dimension();
  const int m = 2 * n;
  Vec y(m + m * m);
  y.head(m) = start.stacked();
  Eigen::Map<Mat>(y.data() + m, m, m).setIdentity();
  if (T == 0.0) return Mat::Identity(m, m);
  const ChartSpace& space = spec.space;
  for (const Piece& piece : pieces(u, T)) {
    const Vec uk = piece.u;
    const Rhs rhs = [&spec, &space, uk, n, m](double, const Vec& s, Vec& ds) {
      const Vec x = s.head(n);
      const Vec p = s.segment(n, n);
      Mat hess = spec.V.hess(x);
      Vec f = -spec.V.grad(x);
      for (int k = 0; k < spec.channels(); ++k) {
        if (uk[k] == 0.0) continue;
        hess += uk[k] * spec.W[k].hess(x);
        f -= uk[k] * spec.W[k].grad(x);
      }
      if (space.is_flat()) {
        ds.head(n) = p;
        ds.segment(n, n) = f;
      } else {
        Vec xdot, pdot;
        kinetic_rhs(space, x, p, xdot, pdot);
        ds.head(n) = xdot;
        ds.segment(n, n) = pdot + f;
      }
      Eigen::Map<Mat>(ds.data() + m, m, m) =
          phase_jacobian(space, x, p, hess) * Eigen::Map<const Mat>(s.data() + m, m, m);
    };
    y = integrate_checked(rhs, piece.a, y, piece.b, step).y;
  }
  return Eigen::Map<const Mat>(y.data() + m, m, m);
}

ExitEvent evolve_until_exit(const HamiltonianSpec& spec, const PhasePoint& start, const ControlSignal& u,
                            double horizon, double step, const std::function<bool(const Vec&)>& inside,
                            double time_tol) {
  check_tuple(spec, u);
  check_start(spec, start);
  require(step > 0.0 && horizon >= 0.0, ErrorCode::InvalidArgument, "step and horizon must be positive");
  const int n = spec.dimension();
  ExitEvent ev;
  if (!inside(start.x)) {
    ev.exited = true;
    ev.state = start;
    return ev;
  }
  Vec y = start.stacked();
  const auto keep = [&](const Vec& state) { return inside(state.head(n)); };
  for (const Piece& piece : pieces(u, horizon)) {
    const EventBracket br = integrate_until(hamiltonian_rhs(spec, piece.u), piece.a, y, piece.b,
                                            steps_for(piece.b - piece.a, step), keep, time_tol);
    if (br.hit) {
      ev.exited = true;
      ev.time = br.t_hi;
      ev.last_inside = br.t_lo;
      ev.state = PhasePoint::from_stacked(br.y_hi);
      return ev;
    }
    y = br.y_lo;
  }
  ev.time = ev.last_inside = horizon;
  ev.state = PhasePoint::from_stacked(y);
  return ev;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  const int n = trajectory.states.empty() ? 0 : trajectory.states.front().dimension();
  const int m = trajectory.control_used.channels();
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x_" << i;
  for (int i = 1; i <= n; ++i) out << ",p_" << i;
  if (m == 1) {
    out << ",u";
  } else {
    for (int k = 1; k <= m; ++k) out << ",u_" << k;
  }
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (std::size_t s = 0; s < trajectory.times.size(); ++s) {
    const double t = trajectory.times[s];
    put(t);
    for (int i = 0; i < n; ++i) out << ',', put(trajectory.states[s].x[i]);
    for (int i = 0; i < n; ++i) out << ',', put(trajectory.states[s].p[i]);
    // The value in force on the interval ending at t (last interval at T).
    const Vec uv = trajectory.control_used.value_at(std::max(0.0, t - 1e-14 * (1.0 + t)));
    for (int k = 0; k < m; ++k) out << ',', put(uv[k]);
    out << '\n';
  }
}

}  // namespace sclab
