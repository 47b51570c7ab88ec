#include "sclab/obstruction.hpp"

#include "sclab/error.hpp"
#include "sclab/registry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sclab {

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

bool has(const PotentialField& f) { return static_cast<bool>(f.value); }

double span_max(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

UniformGrid axis_grid(const UniformGrid& g, int axis) {
  return UniformGrid::line(g.lower[axis], g.length[axis], g.points[axis]);
}

// Multiplies an x-grid vector with a y-grid vector into the row-major 2D grid.
std::vector<cplx> outer(const std::vector<cplx>& fx, const std::vector<cplx>& fy) {
  std::vector<cplx> out(fx.size() * fy.size());
  for (std::size_t i = 0; i < fx.size(); ++i)
    for (std::size_t j = 0; j < fy.size(); ++j) out[i * fy.size() + j] = fx[i] * fy[j];
  return out;
}

// Integral over [t0, t1] of |u| times the linear interpolant of (m0, m1).
double control_weighted(const ControlSignal& u, double t0, double t1, double m0, double m1) {
  if (t1 <= t0) return 0.0;
  std::vector<double> cuts{t0};
  for (double b : u.breakpoints)
    if (b > t0 && b < t1) cuts.push_back(b);
  cuts.push_back(t1);
  const auto m = [&](double t) { return m0 + (m1 - m0) * (t - t0) / (t1 - t0); };
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    s += std::abs(u.value_at(0.5 * (a + b))[0]) * (b - a) * 0.5 * (m(a) + m(b));
  }
  return s;
}

}  // namespace

void ObstructionConfig::validate() const {
  grid.validate();
  require(product ? grid.dimension() == 2 : grid.dimension() == 1, ErrorCode::ValidationError,
          "scalar experiments use a 1D grid and product experiments a 2D grid");
  require(has(V) && has(W) && has(S0) && has(a0), ErrorCode::ValidationError, "V, W, S0 and a0 are required");
  if (product)
    require(has(V_x) && has(V_y) && has(b0), ErrorCode::ValidationError,
            "product experiments need V_x, V_y and b0");
  omega.validate(grid.dimension());
  require(omega.axes.size() == 1 && omega.axes[0] == 0 && omega.bounded(), ErrorCode::ValidationError,
          "omega must be a bounded interval on axis 0");
  const double lo = omega.lower[0], hi = omega.upper[0];
  require(lo >= grid.lower[0] && hi <= grid.lower[0] + grid.length[0], ErrorCode::ValidationError,
          "omega must lie inside the grid box");
  require(omega_prime_lower > lo && omega_prime_upper < hi && omega_prime_lower < omega_prime_upper,
          ErrorCode::ValidationError, "omega' must sit inside omega with a positive margin");
  require(seeds >= 8, ErrorCode::ValidationError, "need at least 8 seeds");
  require(!eps_grid.empty(), ErrorCode::ValidationError, "eps grid is empty");
  for (double e : eps_grid) require(e > 0.0 && std::isfinite(e), ErrorCode::ValidationError, "eps must be positive");
  require(std::is_sorted(eps_grid.begin(), eps_grid.end()), ErrorCode::ValidationError, "eps grid must be ascending");
  require(samples_per_eps >= 2, ErrorCode::ValidationError, "need at least 2 samples per eps");
  require(distance_floor >= 0.0 && distance_floor < 1.0, ErrorCode::ValidationError, "floor must be in [0, 1)");
  require(witness_width > 0.0 && dt >= 0.0 && bisection_tol > 0.0, ErrorCode::ValidationError,
          "witness width, dt and bisection tolerance must be positive");
  ensemble.validate();
}

ObstructionSetup::ObstructionSetup(const ObstructionConfig& config, double horizon) : config_(config) {
  config_.validate();
  x_grid_ = axis_grid(config_.grid, 0);
  const double lo = config_.omega.lower[0], hi = config_.omega.upper[0];
  const double xc = 0.5 * (lo + hi);

  // Constancy of W on Omega (times the N2 grid in the product case).
  std::vector<double> xs;
  for (int k = 0; k <= 40; ++k) xs.push_back(lo + (hi - lo) * k / 40.0);
  for (int i = 0; i < x_grid_.points[0]; ++i) {
    const double x = x_grid_.coordinate(0, i);
    if (x > lo && x < hi) xs.push_back(x);
  }
  if (config_.product) {
    const UniformGrid gy = axis_grid(config_.grid, 1);
    for (int j = 0; j < gy.points[0]; ++j) {
      const double y = gy.coordinate(0, j);
      Vec ref(2);
      ref << xc, y;
      const double w0 = config_.W(ref);
      for (double x : xs) {
        Vec p(2);
        p << x, y;
        defect_ = std::max(defect_, std::abs(config_.W(p) - w0));
      }
    }
  } else {
    c_ = config_.W(v1(xc));
    for (double x : xs) defect_ = std::max(defect_, std::abs(config_.W(v1(x)) - c_));
  }

  const double T = horizon > 0.0 ? horizon : span_max(config_.eps_grid);
  const double eps_min = *std::min_element(config_.eps_grid.begin(), config_.eps_grid.end());
  const double step = std::min({0.01, eps_min / config_.samples_per_eps, T / 4.0});
  const PotentialField& Vfan = config_.product ? config_.V_x : config_.V;
  // Shoot past the horizon so a conjugate floor equal to the fan horizon
  // means "none within 1.25 T".
  fan_ = shoot_characteristics(ChartSpace::flat({x_grid_.length[0]}), config_.S0, TimePotential::stationary(Vfan),
                               SeedGrid::line(lo, hi, config_.seeds), 1.25 * T, step, 1.0, config_.exec);
  const auto ct = first_conjugate_time(fan_, config_.exec);
  conjugate_floor_ = *std::min_element(ct.begin(), ct.end());
  chi_ = CutoffFunction::box({config_.omega_prime_lower}, {config_.omega_prime_upper});

  const WKBField f0 = field(0.0);
  double m = 0.0;
  for (std::size_t i = 0; i < x_grid_.size(); ++i) {
    const double c = chi_.value(x_grid_.point(i));
    m += std::pow(c * f0.a[i], 2);
  }
  m *= x_grid_.cell_volume();
  require(m > 0.0, ErrorCode::ValidationError, "chi a0 vanishes on the grid");
  scale_ = 1.0 / std::sqrt(m);
}

std::optional<UniformGrid> ObstructionSetup::y_grid() const {
  if (!config_.product) return std::nullopt;
  return axis_grid(config_.grid, 1);
}

WKBField ObstructionSetup::field(double t) const {
  WKBFieldOptions opt;
  opt.region = config_.omega;
  opt.exec = config_.exec;
  WKBField f = wkb_field(fan_, config_.a0, x_grid_, t, opt);
  for (auto& a : f.a) a *= scale_;
  return f;
}

std::vector<cplx> ObstructionSetup::scalar_ansatz(double t) const {
  const WKBField f = field(t);
  std::vector<cplx> psi = f.wave();
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const Vec x = x_grid_.point(i);
    if (!chi_.positive_at(x)) {
      psi[i] = 0.0;
      continue;
    }
    if (!f.valid[i]) fail(ErrorCode::MaskViolation, "cutoff support exceeds the valid WKB mask");
    psi[i] *= chi_.value(x);
  }
  return psi;
}

std::vector<cplx> ObstructionSetup::scalar_residual(double t) const { return wkb_residual(field(t), chi_); }

WaveGrid ObstructionSetup::initial_factor() const {
  require(config_.product, ErrorCode::InvalidArgument, "initial factor exists only in the product case");
  const UniformGrid gy = axis_grid(config_.grid, 1);
  WaveGrid w(gy, sample_on(gy, [&](const Vec& y) { return cplx(config_.b0(y)); }));
  w.normalize();
  return w;
}

WaveGrid ObstructionSetup::witness() const {
  const double lo = config_.omega.lower[0], hi = config_.omega.upper[0];
  const double L = x_grid_.length[0];
  const double far = x_grid_.lower[0] + std::fmod(0.5 * (lo + hi) + 0.5 * L - x_grid_.lower[0], L);
  const double w = config_.witness_width;
  std::vector<cplx> fx = sample_on(x_grid_, [&](const Vec& x) {
    if (x[0] >= lo && x[0] <= hi) return cplx(0.0);
    const double d = std::remainder(x[0] - far, L);
    return cplx(std::exp(-d * d / (2.0 * w * w)));
  });
  std::vector<cplx> v = config_.product ? outer(fx, initial_factor().values) : fx;
  WaveGrid out(config_.grid, std::move(v));
  out.normalize();
  return out;
}

PotentialField ObstructionSetup::factor_control() const {
  if (!config_.product) return config_.W;
  const double xc = 0.5 * (config_.omega.lower[0] + config_.omega.upper[0]);
  const PotentialField W = config_.W;
  const auto lift = [xc](const Vec& y) {
    Vec p(2);
    p << xc, y[0];
    return p;
  };
  PotentialField f;
  f.name = "factor-control";
  f.value = [W, lift](const Vec& y) { return W(lift(y)); };
  f.gradient = [W, lift](const Vec& y) -> Vec { return v1(W.grad(lift(y))[1]); };
  f.hessian = [W, lift](const Vec& y) -> Mat { return Mat::Constant(1, 1, W.hess(lift(y))(1, 1)); };
  return f;
}

WaveGrid build_ansatz(const ObstructionSetup& setup, const ControlSignal& u, double t) {
  const auto& cfg = setup.config();
  std::vector<cplx> fx = setup.scalar_ansatz(t);
  if (!cfg.product) {
    const cplx phase = std::exp(cplx(0.0, -setup.constant_value() * u.integral(t)[0]));
    for (auto& v : fx) v *= phase;
    return WaveGrid(cfg.grid, std::move(fx));
  }
  WaveGrid psi2 = setup.initial_factor();
  if (t > 0.0) psi2 = split_step_evolve(psi2, cfg.V_y, setup.factor_control(), u, t, cfg.dt);
  return WaveGrid(cfg.grid, outer(fx, psi2.values));
}

WaveGrid build_ansatz(const ObstructionConfig& config, const ControlSignal& u, double t) {
  return build_ansatz(ObstructionSetup(config, std::max(t, span_max(config.eps_grid))), u, t);
}

double residual_delta(const ObstructionSetup& setup, double eps, int samples) {
  std::vector<double> norms;
  for (int i = 0; i <= samples; ++i) {
    const auto r = setup.scalar_residual(eps * i / samples);
    norms.push_back(std::sqrt(l2_norm_squared(setup.x_grid(), r)));
  }
  return duhamel_delta(norms, eps / samples);
}

ObstructionReport run_localization_experiment(const ObstructionConfig& config) {
  const ObstructionSetup setup(config);
  const auto& cfg = setup.config();
  ObstructionReport rep;
  rep.hypotheses_hold = setup.hypotheses_hold();
  rep.constancy_defect = setup.constancy_defect();
  rep.constant_value = setup.constant_value();
  rep.conjugate_floor = setup.conjugate_floor();
  rep.a0_scale = setup.a0_scale();
  rep.eps_grid = cfg.eps_grid;
  if (!rep.hypotheses_hold && !cfg.allow_broken_hypothesis)
    fail(ErrorCode::HypothesisViolated,
         "W is not constant on omega (defect " + std::to_string(rep.constancy_defect) + ")");
  const double eps_max = span_max(cfg.eps_grid);
  if (rep.conjugate_floor <= eps_max)
    fail(ErrorCode::CausticReached, "a characteristic reaches a conjugate point before the largest eps; "
                                    "use a smaller eps grid");

  // Union of the per-eps uniform sample grids.
  const int M = cfg.samples_per_eps;
  std::vector<double> times;
  for (double e : cfg.eps_grid)
    for (int i = 0; i <= M; ++i) times.push_back(e * i / M);
  std::sort(times.begin(), times.end());
  std::vector<double> uniq;
  for (double t : times)
    if (uniq.empty() || t - uniq.back() > 1e-12) uniq.push_back(t);
  times = uniq;
  const auto index_of = [&](double t) {
    const auto it = std::lower_bound(times.begin(), times.end(), t - 1e-12);
    return static_cast<std::size_t>(it - times.begin());
  };
  std::vector<std::vector<std::size_t>> sub(cfg.eps_grid.size());
  for (std::size_t k = 0; k < cfg.eps_grid.size(); ++k)
    for (int i = 0; i <= M; ++i) sub[k].push_back(index_of(cfg.eps_grid[k] * i / M));

  const UniformGrid& gx = setup.x_grid();
  std::vector<std::vector<cplx>> base(times.size()), resid(times.size());
  for (std::size_t j = 0; j < times.size(); ++j) {
    base[j] = setup.scalar_ansatz(times[j]);
    resid[j] = setup.scalar_residual(times[j]);
    rep.residual_times.push_back(times[j]);
    rep.residual_norms.push_back(std::sqrt(l2_norm_squared(gx, resid[j])));
  }

  // Pointwise weights on the full grid: W minus its reference on Omega and
  // the non-separable part of V.
  const UniformGrid& grid = cfg.grid;
  std::vector<double> w_dev(grid.size()), v_dev(grid.size(), 0.0);
  const PotentialField Wt = setup.factor_control();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec x = grid.point(i);
    if (cfg.product) {
      w_dev[i] = cfg.W(x) - Wt(v1(x[1]));
      v_dev[i] = cfg.V(x) - cfg.V_x(v1(x[0])) - cfg.V_y(v1(x[1]));
    } else {
      w_dev[i] = cfg.W(x) - setup.constant_value();
    }
  }

  const WaveGrid psi1 = setup.witness();
  {
    std::vector<cplx> phi0 = cfg.product ? outer(base[0], setup.initial_factor().values) : base[0];
    const WaveGrid w(grid, phi0);
    rep.initial_tail = std::max(0.0, w.norm() * w.norm() - region_probability(w, cfg.omega));
  }
  const double tail = std::sqrt(rep.initial_tail);

  ControlEnsemble ens = cfg.ensemble;
  ens.duration = eps_max;
  rep.ensemble_size = ens.size();
  std::vector<std::vector<ObstructionRecord>> per_member(ens.size());
  std::vector<double> boundary(ens.size(), 0.0);
  std::vector<char> flagged(ens.size(), 0);
  SplitStepOptions sso;
  sso.dt = cfg.dt;

  for_each_index(cfg.exec, static_cast<std::size_t>(ens.size()), [&](std::size_t m) {
    const ControlSignal u = ens.member(static_cast<int>(m));
    std::vector<std::vector<cplx>> phi(times.size());
    std::vector<std::vector<cplx>> factor;
    if (cfg.product) {
      const auto r2 = split_step_run(setup.initial_factor(), cfg.V_y, Wt, u, times, sso);
      for (const auto& s : r2.states) factor.push_back(s.values);
      for (std::size_t j = 0; j < times.size(); ++j) phi[j] = outer(base[j], factor[j]);
    } else {
      for (std::size_t j = 0; j < times.size(); ++j) {
        const cplx phase = std::exp(cplx(0.0, -setup.constant_value() * u.integral(times[j])[0]));
        phi[j] = base[j];
        for (auto& v : phi[j]) v *= phase;
      }
    }
    const SplitStepResult run = split_step_run(WaveGrid(grid, phi[0]), cfg.V, cfg.W, u, times, sso);
    boundary[m] = run.max_boundary_mass;
    flagged[m] = run.boundary_flag ? 1 : 0;

    std::vector<double> dev(times.size()), dist(times.size()), pout(times.size()), nr(times.size()),
        nm(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
      const WaveGrid& psi = run.states[j];
      dev[j] = l2_distance(grid, psi.values, phi[j]);
      dist[j] = l2_distance(psi, psi1);
      pout[j] = std::max(0.0, psi.norm() * psi.norm() - region_probability(psi, cfg.omega));
      double wm = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) wm += std::norm(w_dev[i] * phi[j][i]);
      nm[j] = std::sqrt(wm * grid.cell_volume());
      if (cfg.product) {
        const auto rr = outer(resid[j], factor[j]);
        double s = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) s += std::norm(rr[i] + v_dev[i] * phi[j][i]);
        nr[j] = std::sqrt(s * grid.cell_volume());
      } else {
        nr[j] = rep.residual_norms[j];
      }
    }

    for (std::size_t k = 0; k < cfg.eps_grid.size(); ++k) {
      ObstructionRecord rec;
      rec.eps = cfg.eps_grid[k];
      rec.member = static_cast<int>(m);
      rec.seed = ens.member_seed(static_cast<int>(m));
      const double h = rec.eps / M;
      rec.min_distance = std::numeric_limits<double>::infinity();
      rec.duhamel_margin = std::numeric_limits<double>::infinity();
      std::vector<double> series;
      double weighted = 0.0;
      for (int i = 0; i <= M; ++i) {
        const std::size_t j = sub[k][i];
        series.push_back(nr[j]);
        if (i > 0) {
          const std::size_t jp = sub[k][i - 1];
          weighted += control_weighted(u, times[jp], times[j], nm[jp], nm[j]);
        }
        const double delta_t = duhamel_delta(series, h) + weighted;
        rec.max_deviation = std::max(rec.max_deviation, dev[j]);
        if (i > 0) rec.duhamel_margin = std::min(rec.duhamel_margin, delta_t - dev[j]);
        rec.min_distance = std::min(rec.min_distance, dist[j]);
        if (dev[j] > delta_t + cfg.duhamel_tol) rec.duhamel_ok = false;
        if (dist[j] < 1.0 - delta_t - cfg.duhamel_tol) rec.floor_ok = false;
        if (i == M) {
          rec.delta = delta_t;
          rec.outside_probability = pout[j];
          rec.outside_ok = std::sqrt(pout[j]) <= delta_t + tail + cfg.duhamel_tol;
        }
      }
      per_member[m].push_back(rec);
    }
  });

  rep.delta_max.assign(cfg.eps_grid.size(), 0.0);
  rep.delta_min.assign(cfg.eps_grid.size(), std::numeric_limits<double>::infinity());
  for (std::size_t m = 0; m < per_member.size(); ++m) {
    rep.max_boundary_mass = std::max(rep.max_boundary_mass, boundary[m]);
    if (flagged[m]) rep.boundary_flag = true;
    for (std::size_t k = 0; k < per_member[m].size(); ++k) {
      const auto& rec = per_member[m][k];
      rep.delta_max[k] = std::max(rep.delta_max[k], rec.delta);
      rep.delta_min[k] = std::min(rep.delta_min[k], rec.delta);
      rep.duhamel_violations += rec.duhamel_ok ? 0 : 1;
      rep.floor_violations += rec.floor_ok ? 0 : 1;
      rep.outside_violations += rec.outside_ok ? 0 : 1;
      rep.records.push_back(rec);
    }
  }
  for (std::size_t k = 0; k < cfg.eps_grid.size(); ++k) {
    rep.delta_spread = std::max(rep.delta_spread, rep.delta_max[k] - rep.delta_min[k]);
    if (rep.delta_max[k] < 1.0 - cfg.distance_floor) rep.certified_bound = cfg.eps_grid[k];
  }
  return rep;
}

double estimate_Tq_lower_bound(const ObstructionConfig& config, double horizon) {
  const double H = horizon > 0.0 ? horizon : span_max(config.eps_grid);
  const ObstructionSetup setup(config, H);
  const double threshold = 1.0 - config.distance_floor;
  const int M = config.samples_per_eps;
  const auto delta = [&](double eps) {
    try {
      return residual_delta(setup, eps, M);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CausticReached || e.code() == ErrorCode::MaskViolation)
        return std::numeric_limits<double>::infinity();
      throw;
    }
  };
  if (delta(H) < threshold) return H;
  double lo = 0.0, hi = H;
  while (hi - lo > config.bisection_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    (delta(mid) < threshold ? lo : hi) = mid;
  }
  return lo;
}

double invert_delta(const std::vector<double>& eps, const std::vector<double>& delta, double floor) {
  require(eps.size() == delta.size() && !eps.empty(), ErrorCode::InvalidArgument, "curve sizes differ");
  const double thr = 1.0 - floor;
  double e0 = 0.0, d0 = 0.0;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (delta[k] >= thr) {
      if (delta[k] == d0) return e0;
      return e0 + (eps[k] - e0) * (thr - d0) / (delta[k] - d0);
    }
    e0 = eps[k];
    d0 = delta[k];
  }
  return eps.back();
}

ObstructionConfig default_obstruction_config() {
  ObstructionConfig c;
  c.grid = UniformGrid::line(0.0, 20.0, 512);
  c.V = cosine_potential(0.5, v1(2.0 * std::numbers::pi / 20.0), 0.0);
  c.W = constant_potential(1, 1.0);
  c.omega = BoxRegion::interval(0, 5.0, 15.0);
  c.omega_prime_lower = 6.5;
  c.omega_prime_upper = 13.5;
  c.S0 = gaussian_potential(0.3, 1.5, v1(10.0));
  c.a0 = gaussian_potential(1.0, 0.7, v1(10.0));
  c.ensemble.count = 200;
  c.ensemble.amplitude = 50.0;
  c.ensemble.min_intervals = 1;
  c.ensemble.max_intervals = 8;
  c.ensemble.latin_hypercube = true;
  c.ensemble.adversarial = true;
  c.ensemble.seed = 7;
  return c;
}

ObstructionConfig product_obstruction_config() {
  ObstructionConfig c = default_obstruction_config();
  c.product = true;
  c.grid = UniformGrid::plane(0.0, 20.0, 256, -8.0, 16.0, 64);
  c.V_x = zero_potential(1);
  c.V_y = harmonic_potential(1.0, v1(0.0));
  c.V = polynomial_potential(2, 1, {0.0, 0.0, 0.5});
  Vec slope(2);
  slope << 0.0, 0.5;
  Vec kw(2);
  kw << 0.0, 1.0;
  c.W = sum_potential({linear_potential(slope, 0.0), cosine_potential(0.3, kw, 0.0)});
  c.b0 = gaussian_potential(1.0, 1.0, v1(0.0));
  c.eps_grid = {0.05, 0.1, 0.2, 0.4};
  c.samples_per_eps = 8;
  c.ensemble.count = 20;
  c.ensemble.amplitude = 10.0;
  return c;
}

}  // namespace sclab
