#include "sclab/steering.hpp"

#include "sclab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace sclab {

namespace {

Vec resolve_weights(const HamiltonianSpec& spec, const Vec& weights) {
  if (weights.size() == 0) {
    require(spec.channels() == 1, ErrorCode::InvalidArgument,
            "control weights are required when there are several control potentials");
    return Vec::Ones(1);
  }
  require(weights.size() == spec.channels(), ErrorCode::InvalidArgument, "one weight per control potential");
  return weights;
}

double metric_norm(const ChartSpace& space, const Vec& x, const Vec& covector) {
  return covector_norm(space, x, covector);
}

// Shortest coordinate displacement from a to b (wrapping circle axes).
Vec chart_displacement(const ChartSpace& space, const Vec& a, const Vec& b) {
  Vec d = b - a;
  for (int i = 0; i < space.dimension(); ++i) {
    if (space.is_periodic(i)) {
      const double L = space.period(i);
      d[i] -= L * std::round(d[i] / L);
    }
  }
  return d;
}

SteeringSegment segment(const Vec& u, double duration) {
  return {ControlSignal::constant(u, duration), duration};
}

}  // namespace

double SteeringPlan::total_duration() const {
  double t = 0.0;
  for (const auto& s : segments) t += s.duration;
  return t;
}

ControlSignal SteeringPlan::combined() const {
  require(!segments.empty(), ErrorCode::InvalidArgument, "empty steering plan");
  ControlSignal out = segments.front().control;
  for (std::size_t i = 1; i < segments.size(); ++i) out = ControlSignal::concat(out, segments[i].control);
  return out;
}

PhasePoint realize(const HamiltonianSpec& spec, const PhasePoint& start, const SteeringPlan& plan, int steps) {
  PhasePoint state = start;
  for (const auto& s : plan.segments) {
    state = evolve_endpoint(spec, state, s.control, s.duration / std::max(1, steps));
  }
  state.x = spec.space.wrap(state.x);
  return state;
}

Vec control_covector(const HamiltonianSpec& spec, const Vec& x, const Vec& weights) {
  const Vec a = resolve_weights(spec, weights);
  Vec d = Vec::Zero(spec.dimension());
  for (int i = 0; i < spec.channels(); ++i) {
    if (a[i] != 0.0) d += a[i] * spec.W[i].grad(x);
  }
  return d;
}

SteeringPlan impulse_steer(const HamiltonianSpec& spec, const PhasePoint& start, double k, double eps,
                           const Vec& weights) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
  const Vec a = resolve_weights(spec, weights);
  SteeringPlan plan;
  plan.epsilon = eps;
  plan.segments.push_back(segment(-(k / eps) * a, eps));
  plan.predicted_endpoint = {start.x, start.p + k * control_covector(spec, start.x, a)};
  return plan;
}

SteeringPlan geodesic_burst(const HamiltonianSpec& spec, const PhasePoint& start, double k, double eps,
                            const Vec& weights, double geodesic_step) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
  const Vec a = resolve_weights(spec, weights);
  const Vec d = control_covector(spec, start.x, a);
  require(metric_norm(spec.space, start.x, d) > 1e-12, ErrorCode::DegenerateDirection,
          "dW vanishes at the start point; the burst cannot move");
  SteeringPlan plan;
  plan.epsilon = eps;
  const double kick = eps * eps;
  plan.segments.push_back(segment(-(k / eps) / kick * a, kick));
  plan.segments.push_back(segment(Vec::Zero(spec.channels()), eps));
  const PhasePoint geo = geodesic_endpoint(spec.space, start.x, k * d, 1.0, geodesic_step);
  plan.predicted_endpoint = {geo.x, geo.p / eps};
  return plan;
}

GradientCurve trace_gradient_curve(const HamiltonianSpec& spec, const Vec& x0, double ds, double max_length) {
  require(ds > 0.0 && max_length > 0.0, ErrorCode::InvalidArgument, "arc-length step and limit must be positive");
  require(spec.channels() == 1, ErrorCode::InvalidArgument, "gradient curves need a single control potential");
  const ChartSpace& space = spec.space;
  const PotentialField& W = spec.W.front();
  auto unit_field = [&](const Vec& x) -> Vec {
    const Vec dw = W.grad(x);
    const double nrm = metric_norm(space, x, dw);
    if (!(nrm > 1e-300)) return Vec::Zero(x.size());
    return (space.is_flat() ? dw : Vec(space.cometric(x) * dw)) / nrm;
  };
  const double grad0 = metric_norm(space, x0, W.grad(x0));
  auto walk = [&](double sign) {
    std::vector<Vec> pts;
    const Rhs rhs = [&](double, const Vec& y, Vec& dy) { dy = sign * unit_field(y); };
    Vec x = x0;
    Vec tangent = sign * unit_field(x0);
    const int steps = static_cast<int>(std::floor(max_length / ds));
    for (int i = 0; i < steps; ++i) {
      Vec next = rk4_step(rhs, 0.0, x, ds);
      if (!next.allFinite() || next.lpNorm<Eigen::Infinity>() > kOverflowGuard) break;
      const Vec dw = W.grad(next);
      // Stop at (near-)critical points and where the direction field flips.
      if (metric_norm(space, next, dw) <= 1e-10 * std::max(1.0, grad0)) break;
      const Vec t_next = sign * unit_field(next);
      if (t_next.dot(tangent) <= 0.0) break;
      pts.push_back(next);
      x = std::move(next);
      tangent = t_next;
    }
    return pts;
  };
  const auto back = walk(-1.0);
  const auto fwd = walk(+1.0);
  GradientCurve curve;
  for (auto it = back.rbegin(); it != back.rend(); ++it) curve.points.push_back(*it);
  curve.points.push_back(x0);
  for (const auto& p : fwd) curve.points.push_back(p);
  const auto nb = static_cast<double>(back.size());
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    curve.arc_length.push_back((static_cast<double>(i) - nb) * ds);
  }
  return curve;
}

SteeringPlan gradient_curve_steer(const HamiltonianSpec& spec, const PhasePoint& start, const Vec& target,
                                  double tol, double eps, const GradientCurveOptions& options) {
  require(tol > 0.0 && eps > 0.0, ErrorCode::InvalidArgument, "tolerance and epsilon must be positive");
  require(spec.channels() == 1, ErrorCode::InvalidArgument, "gradient curves need a single control potential");
  const ChartSpace& space = spec.space;
  const PotentialField& W = spec.W.front();
  const Vec x0 = start.x;
  require(metric_norm(space, x0, W.grad(x0)) > 1e-12, ErrorCode::DegenerateDirection,
          "dW vanishes at the start point");
  const double ds = options.ds > 0.0 ? options.ds : std::min(tol / 10.0, 1e-2);
  const GradientCurve curve = trace_gradient_curve(spec, x0, ds, options.max_arc_length);

  std::size_t origin = 0;
  while (curve.arc_length[origin] < 0.0) ++origin;
  std::size_t best = origin;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double d = chart_displacement(space, curve.points[i], target).norm();
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  if (!(best_dist < tol)) {
    fail(ErrorCode::TargetOffCurve, "target is not within tol of the gradient curve through the start point");
  }

  SteeringPlan plan;
  plan.epsilon = eps;
  if (best == origin) {
    plan.segments.push_back(segment(Vec::Zero(1), eps));
    plan.predicted_endpoint = start;
    return plan;
  }
  // Path nodes from the start towards the closest curve point.
  std::vector<Vec> path;
  if (best > origin) {
    for (std::size_t i = origin; i <= best; ++i) path.push_back(curve.points[i]);
  } else {
    for (std::size_t i = origin + 1; i-- > best;) path.push_back(curve.points[i]);
  }
  const double sigma = best > origin ? 1.0 : -1.0;
  const double node_ds = ds;

  // Point on the path at arc length s from node c (linear between nodes).
  auto path_at = [&](std::size_t c, double s) -> Vec {
    const double pos = static_cast<double>(c) + s / node_ds;
    const auto i = std::min(static_cast<std::size_t>(std::floor(pos)), path.size() - 1);
    if (i + 1 >= path.size()) return path.back();
    const double f = pos - static_cast<double>(i);
    return (1.0 - f) * path[i] + f * path[i + 1];
  };

  const double chord_tol = tol / 10.0;
  const double geo_step = 1e-2;
  std::size_t c = 0;
  Vec p_pred = start.p;
  Vec x_end = x0;
  while (c + 1 < path.size()) {
    const Vec xc = path[c];
    const Vec dw = W.grad(xc);
    const double norm = metric_norm(space, xc, dw);
    std::size_t e = path.size() - 1;
    double k = 0.0;
    PhasePoint geo;
    for (;;) {
      const double len = static_cast<double>(e - c) * node_ds;
      k = sigma * len / norm;
      double dev = 0.0;
      for (int q = 1; q <= 8; ++q) {
        const double tau = q / 8.0;
        const PhasePoint g = geodesic_endpoint(space, xc, k * dw, tau, geo_step);
        dev = std::max(dev, chart_displacement(space, path_at(c, tau * len), g.x).norm());
        if (q == 8) geo = g;
      }
      if (dev < chord_tol || e == c + 1) break;
      e = c + std::max<std::size_t>(1, (e - c) / 2);
    }
    // Impulse sets the momentum component along dW to k / eps.
    const Vec gdw = space.is_flat() ? dw : Vec(space.cometric(xc) * dw);
    const double along = p_pred.dot(gdw) / (norm * norm);
    const double m = k / eps - along;
    const double kick = eps * eps;
    plan.segments.push_back(segment(Vec::Constant(1, -m / kick), kick));
    plan.segments.push_back(segment(Vec::Zero(1), eps));
    // Only the component along dW can be cancelled; in nD the transverse
    // remainder is carried into the next chord.
    p_pred = geo.p / eps + (p_pred - along * dw);
    x_end = geo.x;
    c = e;
  }
  plan.predicted_endpoint = {space.wrap(x_end), p_pred};

  return plan;
}

Vec connecting_covector(const ChartSpace& space, const Vec& x0, const Vec& x1, double step) {
  const Vec disp = chart_displacement(space, x0, x1);
  if (space.is_flat()) return disp;
  const int n = space.dimension();
  Vec p = cometric_at(space, x0).llt().solve(disp);
  auto miss = [&](const Vec& q) {
    const PhasePoint end = geodesic_endpoint(space, x0, q, 1.0, step);
    return chart_displacement(space, x1, end.x);
  };
  for (int iter = 0; iter < 50; ++iter) {
    const Vec F = miss(p);
    if (F.norm() < 1e-10) return p;
    Mat J(n, n);
    for (int j = 0; j < n; ++j) {
      const double h = 1e-6 * (1.0 + std::abs(p[j]));
      Vec qp = p, qm = p;
      qp[j] += h;
      qm[j] -= h;
      J.col(j) = (miss(qp) - miss(qm)) / (2.0 * h);
    }
    Eigen::FullPivLU<Mat> lu(J);
    require(lu.isInvertible(), ErrorCode::LinearSolveFailed, "geodesic shooting Jacobian is singular");
    p -= lu.solve(F);
  }
  fail(ErrorCode::LinearSolveFailed, "geodesic shooting did not converge");
}

SteeringPlan full_rank_steer(const HamiltonianSpec& spec, const PhasePoint& start, const PhasePoint& target,
                             double eps, double tol) {
  require(eps > 0.0 && tol > 0.0, ErrorCode::InvalidArgument, "epsilon and tolerance must be positive");
  const int n = spec.dimension();
  require(spec.channels() == n, ErrorCode::InvalidArgument, "full-rank steering needs one control potential per axis");
  auto wedge = [&](const Vec& x) {
    Mat D(n, n);
    for (int i = 0; i < n; ++i) D.col(i) = spec.W[i].grad(x);
    return D;
  };
  const Mat D0 = wedge(start.x);
  const Mat D1 = wedge(target.x);
  if (std::abs(D0.determinant()) < 1e-10 || std::abs(D1.determinant()) < 1e-10) {
    fail(ErrorCode::WedgeDegenerate, "dW_1 ^ ... ^ dW_n vanishes at an endpoint");
  }
  Eigen::FullPivLU<Mat> lu0(D0);

  SteeringPlan plan;
  plan.epsilon = eps;
  plan.predicted_endpoint = target;
  const double kick = eps * eps;
  const double final_kick = eps * eps * eps;
  // The burst is re-aimed at a shifted target to cancel its O(eps) position bias.
  Vec aim = target.x;
  PhasePoint arrived;
  std::vector<SteeringSegment> burst;
  for (int iter = 0; iter < 8; ++iter) {
    const Vec mu0 = connecting_covector(spec.space, start.x, aim);
    const Vec c = lu0.solve(mu0 / eps - start.p);
    burst = {segment(-c / kick, kick), segment(Vec::Zero(n), eps)};
    SteeringPlan partial;
    partial.segments = burst;
    arrived = realize(spec, start, partial);
    const Vec miss = chart_displacement(spec.space, arrived.x, target.x);
    if (miss.norm() < 0.25 * tol) break;
    aim += miss;
  }
  const Mat Da = wedge(arrived.x);
  Eigen::FullPivLU<Mat> lua(Da);
  require(lua.isInvertible(), ErrorCode::LinearSolveFailed, "control covectors are dependent at the arrival point");
  const Vec b = lua.solve(target.p - arrived.p);
  plan.segments = burst;
  plan.segments.push_back(segment(-b / final_kick, final_kick));
  return plan;
}

EpsilonSearch search_epsilon(const std::function<double(double)>& error, double tol, double eps0, double eps_min) {
  EpsilonSearch out;
  out.error = std::numeric_limits<double>::infinity();
  for (double eps = eps0; eps >= eps_min; eps *= 0.5) {
    const double e = error(eps);
    out.tried_eps.push_back(eps);
    out.tried_error.push_back(e);
    if (e < out.error) {
      out.error = e;
      out.epsilon = eps;
    }
    if (e < tol) {
      out.reached = true;
      break;
    }
  }
  return out;
}

double loglog_slope(const std::vector<double>& eps, const std::vector<double>& err) {
  require(eps.size() == err.size() && eps.size() >= 2, ErrorCode::InvalidArgument, "need at least two samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    require(eps[i] > 0.0 && err[i] > 0.0, ErrorCode::InvalidArgument, "log-log fit needs positive data");
    const double x = std::log(eps[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void write_plan(std::ostream& out, const SteeringPlan& plan, const std::string& prefix) {
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << prefix << ".epsilon = " << num(plan.epsilon) << '\n';
  out << prefix << ".segments = " << plan.segments.size() << '\n';
  for (std::size_t i = 0; i < plan.segments.size(); ++i) {
    const auto& c = plan.segments[i].control;
    const std::string key = prefix + ".segment." + std::to_string(i + 1);
    out << key << ".duration = " << num(plan.segments[i].duration) << '\n';
    out << key << ".breakpoints = ";
    for (std::size_t j = 0; j < c.breakpoints.size(); ++j) out << (j ? ", " : "") << num(c.breakpoints[j]);
    out << '\n' << key << ".values = ";
    for (Eigen::Index r = 0; r < c.values.rows(); ++r) {
      for (Eigen::Index col = 0; col < c.values.cols(); ++col) {
        out << (r || col ? ", " : "") << num(c.values(r, col));
      }
    }
    out << '\n';
  }
}

}  // namespace sclab
