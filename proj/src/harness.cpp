#include "sclab/harness.hpp"

#include "sclab/error.hpp"
#include "sclab/exit_time.hpp"
#include "sclab/obstruction.hpp"
#include "sclab/registry.hpp"
#include "sclab/spectral.hpp"
#include "sclab/steering.hpp"
#include "sclab/wkb.hpp"

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace sclab {
namespace {

using json = nlohmann::ordered_json;

enum class Type { number, integer, list, text, flag, choice };

struct KeySpec {
  KeySpec(std::string k, Type t, std::string d, std::vector<std::string> c = {},
          double lo = -std::numeric_limits<double>::infinity())
      : key(std::move(k)), type(t), def(std::move(d)), choices(std::move(c)), lower(lo) {}

  std::string key;
  Type type;
  std::string def;
  std::vector<std::string> choices;
  double lower;
};

struct PotentialSpec {
  std::string prefix;
  std::string name;
  std::vector<std::pair<std::string, std::string>> params;
};

struct Schema {
  std::vector<KeySpec> keys;
  std::vector<PotentialSpec> potentials;
};

void add_ensemble(Schema& s, const std::string& count, const std::string& amplitude, const std::string& max_intervals,
                  const std::string& duration, bool lhs, bool adversarial) {
  s.keys.emplace_back(KeySpec{"ensemble.count", Type::integer, count, {}, 0});
  s.keys.emplace_back(KeySpec{"ensemble.amplitude", Type::number, amplitude, {}, 0});
  s.keys.emplace_back(KeySpec{"ensemble.min_intervals", Type::integer, "1", {}, 1});
  s.keys.emplace_back(KeySpec{"ensemble.max_intervals", Type::integer, max_intervals, {}, 1});
  if (!duration.empty()) s.keys.emplace_back(KeySpec{"ensemble.duration", Type::number, duration, {}, 0});
  s.keys.emplace_back(KeySpec{"ensemble.latin_hypercube", Type::flag, lhs ? "true" : "false"});
  s.keys.emplace_back(KeySpec{"ensemble.adversarial", Type::flag, adversarial ? "true" : "false"});
}

Schema schema_for(ExperimentKind kind) {
  Schema s;
  std::vector<std::string> kinds = experiment_names();
  s.keys.emplace_back(KeySpec{"experiment", Type::choice, std::string(to_string(kind)), kinds});
  s.keys.emplace_back(KeySpec{"seed", Type::integer, "1", {}, 0});
  s.keys.emplace_back(KeySpec{"output", Type::text, "out"});
  switch (kind) {
    case ExperimentKind::steer:
      s.keys.emplace_back(KeySpec{"steer.dimension", Type::integer, "1", {}, 1});
      s.keys.emplace_back(KeySpec{"steer.method", Type::choice, "impulse", {"impulse", "burst"}});
      s.keys.emplace_back(KeySpec{"steer.x0", Type::list, "0.4"});
      s.keys.emplace_back(KeySpec{"steer.p0", Type::list, "-0.3"});
      s.keys.emplace_back(KeySpec{"steer.k", Type::number, "1"});
      s.keys.emplace_back(KeySpec{"steer.eps", Type::list, "0.1, 0.01, 0.001, 0.0001"});
      s.keys.emplace_back(KeySpec{"steer.steps", Type::integer, "64", {}, 1});
      s.keys.emplace_back(KeySpec{"steer.tol", Type::number, "0.01", {}, 0});
      s.potentials.push_back({"V", "harmonic", {{"k", "1"}, {"center", "0"}}});
      s.potentials.push_back({"W", "linear", {{"slope", "1"}, {"offset", "0"}}});
      break;
    case ExperimentKind::exit_time:
      s.keys.emplace_back(KeySpec{"exit.dimension", Type::integer, "2", {}, 1});
      s.keys.emplace_back(KeySpec{"exit.n1_axes", Type::list, "0"});
      s.keys.emplace_back(KeySpec{"exit.x0", Type::list, "0, 1"});
      s.keys.emplace_back(KeySpec{"exit.p0", Type::list, "0, 0"});
      s.keys.emplace_back(KeySpec{"exit.horizon", Type::number, "3", {}, 0});
      s.keys.emplace_back(KeySpec{"exit.step", Type::number, "0.001", {}, 0});
      s.keys.emplace_back(KeySpec{"exit.time_tol", Type::number, "1e-7", {}, 0});
      s.keys.emplace_back(KeySpec{"omega.lower", Type::list, "-1"});
      s.keys.emplace_back(KeySpec{"omega.upper", Type::list, "1"});
      add_ensemble(s, "100", "100", "8", "3", false, true);
      s.potentials.push_back(
          {"V", "tilted-cosine", {{"slope", "1"}, {"axis_a", "0"}, {"wavenumber", "1"}, {"axis_b", "1"}, {"phase", "0"}}});
      s.potentials.push_back({"W", "linear", {{"slope", "0, 1"}, {"offset", "0"}}});
      break;
    case ExperimentKind::wkb:
      s.keys.emplace_back(KeySpec{"wkb.hbar", Type::number, "1", {}, 0});
      s.keys.emplace_back(KeySpec{"wkb.horizon", Type::number, "1.5", {}, 0});
      s.keys.emplace_back(KeySpec{"wkb.step", Type::number, "0.01", {}, 0});
      s.keys.emplace_back(KeySpec{"wkb.field_time", Type::number, "0.5", {}, 0});
      s.keys.emplace_back(KeySpec{"seeds.lower", Type::number, "-2"});
      s.keys.emplace_back(KeySpec{"seeds.upper", Type::number, "2"});
      s.keys.emplace_back(KeySpec{"seeds.count", Type::integer, "81", {}, 2});
      s.keys.emplace_back(KeySpec{"grid.lower", Type::number, "-4"});
      s.keys.emplace_back(KeySpec{"grid.length", Type::number, "8", {}, 0});
      s.keys.emplace_back(KeySpec{"grid.points", Type::integer, "128", {}, 4});
      s.potentials.push_back({"S0", "polynomial", {{"axis", "0"}, {"coeffs", "0, 0, -0.5"}}});
      s.potentials.push_back({"a0", "gaussian", {{"amplitude", "1"}, {"width", "1"}, {"center", "0"}}});
      s.potentials.push_back({"V", "zero", {}});
      break;
    case ExperimentKind::obstruction:
      s.keys.emplace_back(KeySpec{"grid.lower", Type::number, "0"});
      s.keys.emplace_back(KeySpec{"grid.length", Type::number, "20", {}, 0});
      s.keys.emplace_back(KeySpec{"grid.points", Type::integer, "512", {}, 4});
      s.keys.emplace_back(KeySpec{"omega.lower", Type::number, "5"});
      s.keys.emplace_back(KeySpec{"omega.upper", Type::number, "15"});
      s.keys.emplace_back(KeySpec{"omega_prime.lower", Type::number, "6.5"});
      s.keys.emplace_back(KeySpec{"omega_prime.upper", Type::number, "13.5"});
      s.keys.emplace_back(KeySpec{"obstruction.seeds", Type::integer, "201", {}, 8});
      s.keys.emplace_back(KeySpec{"obstruction.eps_grid", Type::list, "0.05, 0.1, 0.2, 0.4, 0.8"});
      s.keys.emplace_back(KeySpec{"obstruction.samples_per_eps", Type::integer, "16", {}, 2});
      s.keys.emplace_back(KeySpec{"obstruction.distance_floor", Type::number, "0", {}, 0});
      s.keys.emplace_back(KeySpec{"obstruction.witness_width", Type::number, "2", {}, 0});
      s.keys.emplace_back(KeySpec{"obstruction.duhamel_tol", Type::number, "1e-6", {}, 0});
      s.keys.emplace_back(KeySpec{"obstruction.constancy_tol", Type::number, "1e-9", {}, 0});
      s.keys.emplace_back(KeySpec{"obstruction.allow_broken_hypothesis", Type::flag, "false"});
      s.keys.emplace_back(KeySpec{"obstruction.dt", Type::number, "0", {}, 0});
      add_ensemble(s, "200", "50", "8", "", true, true);
      s.potentials.push_back({"V", "cosine", {{"amplitude", "0.5"}, {"wavenumber", "0.3141592653589793"}, {"phase", "0"}}});
      s.potentials.push_back({"W", "constant", {{"value", "1"}}});
      s.potentials.push_back({"S0", "gaussian", {{"amplitude", "0.3"}, {"width", "1.5"}, {"center", "10"}}});
      s.potentials.push_back({"a0", "gaussian", {{"amplitude", "1"}, {"width", "0.7"}, {"center", "10"}}});
      break;
    case ExperimentKind::spectral:
      s.keys.emplace_back(KeySpec{"spectral.a", Type::number, "-1"});
      s.keys.emplace_back(KeySpec{"spectral.b", Type::number, "1"});
      s.keys.emplace_back(KeySpec{"spectral.c", Type::number, "0"});
      s.keys.emplace_back(KeySpec{"spectral.eps", Type::number, "0.5", {}, 0});
      s.keys.emplace_back(KeySpec{"spectral.N", Type::integer, "12", {}, 2});
      s.keys.emplace_back(KeySpec{"spectral.mu", Type::number, "1"});
      s.keys.emplace_back(KeySpec{"spectral.N_big", Type::integer, "64", {}, 4});
      s.keys.emplace_back(KeySpec{"spectral.zero_tol", Type::number, "1e-12", {}, 0});
      s.keys.emplace_back(KeySpec{"relation.gaps", Type::integer, "4", {}, 1});
      s.keys.emplace_back(KeySpec{"relation.bound", Type::integer, "50", {}, 1});
      s.keys.emplace_back(KeySpec{"relation.precision", Type::number, "1e-9", {}, 0});
      s.keys.emplace_back(KeySpec{"relation.method", Type::choice, "automatic", {"automatic", "exhaustive", "lattice"}});
      s.keys.emplace_back(KeySpec{"disc.r0", Type::number, "0.1", {}, 0});
      s.keys.emplace_back(KeySpec{"disc.horizon", Type::number, "2", {}, 0});
      s.keys.emplace_back(KeySpec{"disc.step", Type::number, "0.001", {}, 0});
      s.keys.emplace_back(KeySpec{"disc.angles", Type::integer, "8", {}, 1});
      add_ensemble(s, "100", "1000", "6", "2", false, true);
      break;
  }
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::string cur;
  for (char ch : s) {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) items.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) items.push_back(cur);
  return items;
}

std::string where(const std::string& key, const ConfigEntry& e) {
  return "'" + key + "'" + (e.line > 0 ? " (line " + std::to_string(e.line) + ")" : "");
}

void check_type(const KeySpec& spec, const ConfigEntry& e) {
  const std::string& v = e.value;
  auto bad = [&](const std::string& what) { fail(ErrorCode::ValidationError, where(spec.key, e) + ": " + what); };
  double x = 0.0;
  switch (spec.type) {
    case Type::number:
      if (!parse_double(v, x)) bad("expected a number, got '" + v + "'");
      if (x < spec.lower) bad("must be >= " + std::to_string(spec.lower));
      break;
    case Type::integer: {
      long n = 0;
      const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
      if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad("expected an integer, got '" + v + "'");
      if (n < spec.lower) bad("must be >= " + std::to_string(static_cast<long>(spec.lower)));
      break;
    }
    case Type::list: {
      const auto items = split_list(v);
      if (items.empty()) bad("expected a list of numbers");
      for (const auto& item : items)
        if (!parse_double(item, x)) bad("expected a number in the list, got '" + item + "'");
      break;
    }
    case Type::flag:
      if (v != "true" && v != "false" && v != "1" && v != "0") bad("expected true or false, got '" + v + "'");
      break;
    case Type::choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) bad("unknown choice '" + v + "'");
      break;
    case Type::text:
      break;
  }
}

std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::steer: return "steer";
    case ExperimentKind::exit_time: return "exit-time";
    case ExperimentKind::wkb: return "wkb";
    case ExperimentKind::obstruction: return "obstruction";
    case ExperimentKind::spectral: return "spectral";
  }
  return "unknown";
}

std::vector<std::string> experiment_names() { return {"steer", "exit-time", "wkb", "obstruction", "spectral"}; }

ExperimentKind parse_kind(std::string_view name) {
  for (auto k : {ExperimentKind::steer, ExperimentKind::exit_time, ExperimentKind::wkb, ExperimentKind::obstruction,
                 ExperimentKind::spectral})
    if (to_string(k) == name) return k;
  fail(ErrorCode::ValidationError, "'experiment': unknown kind '" + std::string(name) + "'");
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t ExperimentConfig::seed() const { return static_cast<std::uint64_t>(integer("seed")); }

std::string ExperimentConfig::text(const std::string& key) const {
  const auto it = entries_.find(key);
  require(it != entries_.end(), ErrorCode::ValidationError, "missing key '" + key + "'");
  return it->second.value;
}

double ExperimentConfig::number(const std::string& key) const {
  double x = 0.0;
  require(parse_double(text(key), x), ErrorCode::ValidationError, "'" + key + "' is not a number");
  return x;
}

long ExperimentConfig::integer(const std::string& key) const {
  const std::string v = text(key);
  long n = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
  require(r.ec == std::errc() && r.ptr == v.data() + v.size(), ErrorCode::ValidationError,
          "'" + key + "' is not an integer");
  return n;
}

bool ExperimentConfig::flag(const std::string& key) const {
  const std::string v = text(key);
  return v == "true" || v == "1";
}

std::vector<double> ExperimentConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(text(key))) {
    double x = 0.0;
    require(parse_double(item, x), ErrorCode::ValidationError, "'" + key + "' holds a non-number");
    out.push_back(x);
  }
  return out;
}

std::map<std::string, std::string> ExperimentConfig::section(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  const std::string p = prefix + ".";
  for (const auto& [k, e] : entries_)
    if (k.rfind(p, 0) == 0) out[k.substr(p.size())] = e.value;
  return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = {value, 0};
  validate();
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [k, e] : entries_) {
    if (k == "output") continue;
    out += k + " = " + e.value + "\n";
  }
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

void ExperimentConfig::validate() {
  const auto kind_it = entries_.find("experiment");
  require(kind_it != entries_.end(), ErrorCode::ValidationError, "'experiment' is required");
  kind_ = parse_kind(kind_it->second.value);
  const Schema schema = schema_for(kind_);

  for (const auto& spec : schema.keys)
    if (!entries_.count(spec.key)) entries_[spec.key] = {spec.def, 0};
  for (const auto& pot : schema.potentials) {
    const std::string name_key = pot.prefix + ".name";
    if (!entries_.count(name_key)) entries_[name_key] = {pot.name, 0};
    if (entries_[name_key].value == pot.name)
      for (const auto& [param, value] : pot.params)
        if (!entries_.count(pot.prefix + "." + param)) entries_[pot.prefix + "." + param] = {value, 0};
  }

  for (const auto& [key, entry] : entries_) {
    const auto spec = std::find_if(schema.keys.begin(), schema.keys.end(), [&](const KeySpec& s) { return s.key == key; });
    if (spec != schema.keys.end()) {
      check_type(*spec, entry);
      continue;
    }
    const auto dot = key.find('.');
    const auto pot = dot == std::string::npos
                         ? schema.potentials.end()
                         : std::find_if(schema.potentials.begin(), schema.potentials.end(),
                                        [&](const PotentialSpec& p) { return p.prefix == key.substr(0, dot); });
    require(pot != schema.potentials.end(), ErrorCode::ValidationError, "unknown key " + where(key, entry));
    const std::string param = key.substr(dot + 1);
    const std::string name = entries_.at(pot->prefix + ".name").value;
    if (param == "name") {
      const auto names = potential_names();
      require(std::find(names.begin(), names.end(), name) != names.end(), ErrorCode::ValidationError,
              where(key, entry) + ": unknown potential '" + name + "'");
      continue;
    }
    const auto allowed = potential_parameters(name);
    require(std::find(allowed.begin(), allowed.end(), param) != allowed.end(), ErrorCode::ValidationError,
            "unknown key " + where(key, entry) + " for potential '" + name + "'");
    check_type(KeySpec{key, Type::list, ""}, entry);
  }

  if (entries_.count("ensemble.max_intervals"))
    require(integer("ensemble.max_intervals") >= integer("ensemble.min_intervals"), ErrorCode::ValidationError,
            "'ensemble.max_intervals' must be >= 'ensemble.min_intervals'");
}

ExperimentConfig parse_config(std::string_view text, std::optional<ExperimentKind> kind) {
  ExperimentConfig config;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash_pos = raw.find('#');
    const std::string body = trim(hash_pos == std::string::npos ? raw : raw.substr(0, hash_pos));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string::npos, ErrorCode::ParseError, "line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    require(!key.empty(), ErrorCode::ParseError, "line " + std::to_string(line) + ": empty key");
    const bool key_ok = std::all_of(key.begin(), key.end(), [](char ch) {
      return std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-';
    });
    require(key_ok && key.front() != '.' && key.back() != '.' && key.find("..") == std::string::npos,
            ErrorCode::ParseError, "line " + std::to_string(line) + ": malformed key '" + key + "'");
    require(!config.entries_.count(key), ErrorCode::ParseError,
            "line " + std::to_string(line) + ": duplicate key '" + key + "'");
    config.entries_[key] = {value, line};
  }
  if (kind) {
    const auto it = config.entries_.find("experiment");
    if (it == config.entries_.end())
      config.entries_["experiment"] = {std::string(to_string(*kind)), 0};
    else
      require(it->second.value == to_string(*kind), ErrorCode::ValidationError,
              where("experiment", it->second) + ": config is for '" + it->second.value + "', not '" +
                  std::string(to_string(*kind)) + "'");
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), kind);
}

std::string default_config_text(ExperimentKind kind) {
  const Schema schema = schema_for(kind);
  std::string out;
  for (const auto& spec : schema.keys) out += spec.key + " = " + spec.def + "\n";
  for (const auto& pot : schema.potentials) {
    out += pot.prefix + ".name = " + pot.name + "\n";
    for (const auto& [param, value] : pot.params) out += pot.prefix + "." + param + " = " + value + "\n";
  }
  return out;
}

namespace {

class Outputs {
 public:
  Outputs(const ExperimentConfig& config, std::filesystem::path dir) : config_(config), dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    require(!ec, ErrorCode::IoError, "cannot create output directory '" + dir_.string() + "'");
  }

  std::string header() const {
    return "# sclab " + std::string(to_string(config_.kind())) + " config_hash=" + hex64(config_.hash()) +
           " seed=" + std::to_string(config_.seed()) + "\n";
  }

  /// Opens a CSV (or text table) and writes the provenance header.
  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write '" + (dir_ / name).string() + "'");
    out.precision(17);
    out << header();
    files.push_back(name);
    return out;
  }

  void write_summary(const json& summary) {
    std::ofstream out(dir_ / "summary.json");
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot write summary.json");
    out << summary.dump(2) << "\n";
  }

  std::vector<std::string> files;

 private:
  const ExperimentConfig& config_;
  std::filesystem::path dir_;
};

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double safe(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN(); }

PotentialField potential_from(const ExperimentConfig& c, const std::string& prefix, int dimension,
                              const std::vector<int>& n1_axes = {}) {
  ParamMap params;
  std::string name;
  for (const auto& [k, v] : c.section(prefix)) {
    if (k == "name") {
      name = v;
      continue;
    }
    params[k] = c.numbers(prefix + "." + k);
  }
  return make_potential(name, params, dimension, n1_axes);
}

ControlEnsemble ensemble_from(const ExperimentConfig& c) {
  ControlEnsemble e;
  e.count = static_cast<int>(c.integer("ensemble.count"));
  e.amplitude = c.number("ensemble.amplitude");
  e.min_intervals = static_cast<int>(c.integer("ensemble.min_intervals"));
  e.max_intervals = static_cast<int>(c.integer("ensemble.max_intervals"));
  if (c.has("ensemble.duration")) e.duration = c.number("ensemble.duration");
  e.latin_hypercube = c.flag("ensemble.latin_hypercube");
  e.adversarial = c.flag("ensemble.adversarial");
  e.seed = c.seed();
  e.validate();
  return e;
}

void require_size(const Vec& v, int n, const std::string& key) {
  require(v.size() == n, ErrorCode::ValidationError, "'" + key + "' needs " + std::to_string(n) + " entries");
}

int run_steer(const ExperimentConfig& c, Outputs& out, json& s) {
  const int dim = static_cast<int>(c.integer("steer.dimension"));
  const HamiltonianSpec spec(ChartSpace::flat_lines(dim), potential_from(c, "V", dim), potential_from(c, "W", dim));
  const PhasePoint start{to_vec(c.numbers("steer.x0")), to_vec(c.numbers("steer.p0"))};
  require_size(start.x, dim, "steer.x0");
  require_size(start.p, dim, "steer.p0");
  const double k = c.number("steer.k");
  const bool burst = c.text("steer.method") == "burst";
  const int steps = static_cast<int>(c.integer("steer.steps"));
  const auto eps = c.numbers("steer.eps");
  for (double e : eps) require(e > 0.0, ErrorCode::ValidationError, "'steer.eps' entries must be positive");

  auto table = out.open("steer_sweep.csv");
  table << "eps,error";
  for (const char* part : {"pred_x", "pred_p", "real_x", "real_p"})
    for (int i = 0; i < dim; ++i) table << "," << part << i;
  table << "\n";
  std::vector<double> errors;
  SteeringPlan last;
  for (double e : eps) {
    const SteeringPlan plan = burst ? geodesic_burst(spec, start, k, e) : impulse_steer(spec, start, k, e);
    const PhasePoint real = realize(spec, start, plan, steps);
    const double err = (real.stacked() - plan.predicted_endpoint.stacked()).norm();
    errors.push_back(err);
    table << fmt(e) << "," << fmt(err);
    for (const Vec* v : {&plan.predicted_endpoint.x, &plan.predicted_endpoint.p, &real.x, &real.p})
      for (int i = 0; i < dim; ++i) table << "," << fmt((*v)[i]);
    table << "\n";
    last = plan;
  }
  {
    auto plan_out = out.open("plan.txt");
    write_plan(plan_out, last);
  }
  s["method"] = burst ? "burst" : "impulse";
  s["eps"] = eps;
  s["errors"] = errors;
  s["loglog_slope"] = eps.size() >= 2 ? safe(loglog_slope(eps, errors)) : std::numeric_limits<double>::quiet_NaN();
  s["final_error"] = errors.back();
  s["final_within_tol"] = errors.back() < c.number("steer.tol");
  s["predicted_endpoint"] = {{"x", to_json(last.predicted_endpoint.x)}, {"p", to_json(last.predicted_endpoint.p)}};
  return 0;
}

int run_exit(const ExperimentConfig& c, Outputs& out, json& s, Exec exec) {
  const int dim = static_cast<int>(c.integer("exit.dimension"));
  std::vector<int> n1;
  for (double a : c.numbers("exit.n1_axes")) {
    require(a == std::floor(a) && a >= 0 && a < dim, ErrorCode::ValidationError, "'exit.n1_axes' holds a bad axis");
    n1.push_back(static_cast<int>(a));
  }
  std::vector<int> n2;
  for (int a = 0; a < dim; ++a)
    if (std::find(n1.begin(), n1.end(), a) == n1.end()) n2.push_back(a);
  auto space = ChartSpace::flat_lines(dim);
  space.set_product_split({n1, n2});
  const HamiltonianSpec spec(space, potential_from(c, "V", dim, n1), potential_from(c, "W", dim, n1));
  const PhasePoint start{to_vec(c.numbers("exit.x0")), to_vec(c.numbers("exit.p0"))};
  require_size(start.x, dim, "exit.x0");
  require_size(start.p, dim, "exit.p0");
  BoxRegion omega{n1, c.numbers("omega.lower"), c.numbers("omega.upper")};
  require(omega.lower.size() == n1.size() && omega.upper.size() == n1.size(), ErrorCode::ValidationError,
          "'omega.lower' and 'omega.upper' need one entry per N1 axis");
  omega.validate(dim);

  SampledExitOptions opt;
  opt.horizon = c.number("exit.horizon");
  opt.step = c.number("exit.step");
  opt.time_tol = c.number("exit.time_tol");
  opt.bound.horizon = opt.horizon;
  opt.exec = exec;
  const auto report = sampled_exit_time(spec, start, omega, ensemble_from(c), opt);

  auto table = out.open("exit_times.csv");
  table << "member,control_seed,exit_time\n";
  for (std::size_t i = 0; i < report.exit_times.size(); ++i)
    table << i << "," << report.member_seeds[i] << "," << fmt(report.exit_times[i]) << "\n";
  s["hypotheses_hold"] = report.hypotheses_hold;
  s["analytic_bound"] = safe(report.analytic_bound);
  s["sampled_min_exit"] = report.sampled_min_exit;
  s["ensemble_size"] = report.ensemble_size;
  s["violations"] = report.violations;
  s["unresolved"] = report.unresolved;
  s["witness_index"] = report.witness_index;
  s["horizon"] = report.horizon;
  return report.hypotheses_hold ? 0 : 2;
}

int run_wkb(const ExperimentConfig& c, Outputs& out, json& s, Exec exec) {
  const auto space = ChartSpace::flat_lines(1);
  const auto S0 = potential_from(c, "S0", 1);
  const auto a0 = potential_from(c, "a0", 1);
  const auto V = TimePotential::stationary(potential_from(c, "V", 1));
  const SeedGrid seeds =
      SeedGrid::line(c.number("seeds.lower"), c.number("seeds.upper"), static_cast<int>(c.integer("seeds.count")));
  seeds.validate();
  const double T = c.number("wkb.horizon");
  const auto fan = shoot_characteristics(space, S0, V, seeds, T, c.number("wkb.step"), c.number("wkb.hbar"), exec);
  const auto conj = first_conjugate_time(fan, exec);

  double transport_error = 0.0;
  for (std::size_t i = 0; i < fan.seed_count(); ++i)
    for (std::size_t k = 0; k < fan.times.size(); ++k) {
      const double L = fan.transport_log[i][k];
      if (std::isnan(L)) continue;
      transport_error = std::max(transport_error, std::abs(std::exp(L) - fan.J[i][k]) / std::abs(fan.J[i][k]));
    }
  {
    auto f = out.open("fan.csv");
    write_fan_csv(f, fan);
  }
  {
    auto f = out.open("conjugate.csv");
    f << "seed,x0,conjugate_time\n";
    for (std::size_t i = 0; i < conj.size(); ++i) f << i << "," << fmt(seeds.point(i)[0]) << "," << fmt(conj[i]) << "\n";
  }
  const double t = c.number("wkb.field_time");
  require(t <= T, ErrorCode::ValidationError, "'wkb.field_time' must not exceed 'wkb.horizon'");
  const auto grid = UniformGrid::line(c.number("grid.lower"), c.number("grid.length"),
                                      static_cast<int>(c.integer("grid.points")));
  WKBFieldOptions fopt;
  fopt.exec = exec;
  const auto field = wkb_field(fan, a0, grid, t, fopt);
  {
    auto f = out.open("wkb_field.csv");
    write_wkb_field_csv(f, field);
  }
  s["seeds"] = fan.seed_count();
  s["horizon"] = T;
  s["conjugate_time_min"] = *std::min_element(conj.begin(), conj.end());
  s["conjugate_time_max"] = *std::max_element(conj.begin(), conj.end());
  s["transport_max_relative_error"] = transport_error;
  s["field_time"] = t;
  s["field_valid_points"] = field.valid_count();
  s["field_points"] = grid.size();
  return 0;
}

int run_obstruction(const ExperimentConfig& c, Outputs& out, json& s, Exec exec) {
  ObstructionConfig cfg;
  cfg.grid = UniformGrid::line(c.number("grid.lower"), c.number("grid.length"), static_cast<int>(c.integer("grid.points")));
  cfg.V = potential_from(c, "V", 1);
  cfg.W = potential_from(c, "W", 1);
  cfg.S0 = potential_from(c, "S0", 1);
  cfg.a0 = potential_from(c, "a0", 1);
  cfg.omega = BoxRegion::interval(0, c.number("omega.lower"), c.number("omega.upper"));
  cfg.omega_prime_lower = c.number("omega_prime.lower");
  cfg.omega_prime_upper = c.number("omega_prime.upper");
  cfg.seeds = static_cast<int>(c.integer("obstruction.seeds"));
  cfg.eps_grid = c.numbers("obstruction.eps_grid");
  cfg.samples_per_eps = static_cast<int>(c.integer("obstruction.samples_per_eps"));
  cfg.distance_floor = c.number("obstruction.distance_floor");
  cfg.witness_width = c.number("obstruction.witness_width");
  cfg.duhamel_tol = c.number("obstruction.duhamel_tol");
  cfg.constancy_tol = c.number("obstruction.constancy_tol");
  cfg.allow_broken_hypothesis = c.flag("obstruction.allow_broken_hypothesis");
  cfg.dt = c.number("obstruction.dt");
  cfg.ensemble = ensemble_from(c);
  cfg.exec = exec;
  const auto r = run_localization_experiment(cfg);

  auto table = out.open("obstruction.csv");
  table << "eps,member,control_seed,delta,max_deviation,duhamel_margin,min_distance,outside_probability,duhamel_ok,"
           "floor_ok,outside_ok\n";
  for (const auto& rec : r.records)
    table << fmt(rec.eps) << "," << rec.member << "," << rec.seed << "," << fmt(rec.delta) << ","
          << fmt(rec.max_deviation) << "," << fmt(rec.duhamel_margin) << "," << fmt(rec.min_distance) << ","
          << fmt(rec.outside_probability) << "," << rec.duhamel_ok << "," << rec.floor_ok << "," << rec.outside_ok
          << "\n";
  auto residual = out.open("residual.csv");
  residual << "t,residual_norm\n";
  for (std::size_t i = 0; i < r.residual_times.size(); ++i)
    residual << fmt(r.residual_times[i]) << "," << fmt(r.residual_norms[i]) << "\n";

  s["hypotheses_hold"] = r.hypotheses_hold;
  s["constancy_defect"] = r.constancy_defect;
  s["constant_value"] = r.constant_value;
  s["ensemble_size"] = r.ensemble_size;
  s["eps_grid"] = r.eps_grid;
  s["delta_max"] = r.delta_max;
  s["delta_min"] = r.delta_min;
  s["delta_spread"] = r.delta_spread;
  s["certified_bound"] = r.certified_bound;
  s["duhamel_violations"] = r.duhamel_violations;
  s["floor_violations"] = r.floor_violations;
  s["outside_violations"] = r.outside_violations;
  s["conjugate_floor"] = r.conjugate_floor;
  s["initial_tail"] = r.initial_tail;
  s["max_boundary_mass"] = r.max_boundary_mass;
  s["boundary_flag"] = r.boundary_flag;
  s["a0_scale"] = r.a0_scale;
  return r.hypotheses_hold ? 0 : 2;
}

int run_spectral(const ExperimentConfig& c, Outputs& out, json& s, Exec exec) {
  const double a = c.number("spectral.a"), b = c.number("spectral.b"), cc = c.number("spectral.c");
  const double eps = c.number("spectral.eps");
  const int N = static_cast<int>(c.integer("spectral.N"));
  const double zero_tol = c.number("spectral.zero_tol");
  const auto B = gaussian_coupling(a, b, cc, N, 0, exec);
  const auto cut = cutoff_coupling(a, b, cc, eps, N, exec);
  {
    auto f = out.open("coupling.csv");
    f << "i,j,b,f_eps,b_hat\n";
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        f << i << "," << j << "," << fmt(B.b(i, j)) << "," << fmt(cut.f(i, j)) << "," << fmt(cut.b_hat.b(i, j)) << "\n";
  }
  json conn = json::array();
  bool all_connected = true;
  {
    auto f = out.open("connectivity.csv");
    f << "k,connected,components,connected_cutoff,components_cutoff\n";
    for (int k = 1; k <= N; ++k) {
      const auto full = minor_connectivity(B.b, k, zero_tol);
      const auto hat = minor_connectivity(cut.b_hat.b, k, zero_tol);
      all_connected = all_connected && full.connected;
      f << k << "," << full.connected << "," << full.components.size() << "," << hat.connected << ","
        << hat.components.size() << "\n";
      conn.push_back({{"k", k}, {"connected", full.connected}, {"connected_cutoff", hat.connected}});
    }
  }
  const double mu = c.number("spectral.mu");
  const auto spec = perturbed_spectrum(mu, a, b, cc, N, static_cast<int>(c.integer("spectral.N_big")));
  {
    auto f = out.open("gaps.csv");
    f << "i,eigenvalue,gap\n";
    for (std::size_t i = 0; i < spec.gaps.eigenvalues.size(); ++i)
      f << i << "," << fmt(spec.gaps.eigenvalues[i]) << ","
        << (i < spec.gaps.gaps.size() ? fmt(spec.gaps.gaps[i]) : std::string("")) << "\n";
  }
  const int used = std::min<int>(static_cast<int>(c.integer("relation.gaps")), static_cast<int>(spec.gaps.gaps.size()));
  const std::vector<double> gaps(spec.gaps.gaps.begin(), spec.gaps.gaps.begin() + used);
  const std::string method_name = c.text("relation.method");
  const RelationSearch method = method_name == "exhaustive" ? RelationSearch::exhaustive
                                : method_name == "lattice"  ? RelationSearch::lattice
                                                            : RelationSearch::automatic;
  const long bound = c.integer("relation.bound");
  const double precision = c.number("relation.precision");
  const auto rel = gap_rational_relation(gaps, bound, precision, method);
  {
    auto f = out.open("relation.csv");
    f << "gaps_used,bound,precision,method,found,coefficients,residual\n";
    std::string coeffs;
    double residual = std::numeric_limits<double>::quiet_NaN();
    if (rel) {
      residual = 0.0;
      for (int i = 0; i < used; ++i) {
        coeffs += (i ? " " : "") + std::to_string((*rel)[i]);
        residual += (*rel)[i] * gaps[i];
      }
    }
    f << used << "," << bound << "," << fmt(precision) << "," << method_name << "," << rel.has_value() << "," << coeffs
      << "," << fmt(residual) << "\n";
  }
  DiscOptions dopt;
  dopt.a = a;
  dopt.b = b;
  dopt.c = cc;
  dopt.step = c.number("disc.step");
  dopt.angles = static_cast<int>(c.integer("disc.angles"));
  dopt.exec = exec;
  const auto ensemble = ensemble_from(c);
  const auto disc = invariant_disc_check(eps, ensemble, c.number("disc.horizon"), c.number("disc.r0"), dopt);
  {
    auto f = out.open("disc.csv");
    f << "member,control_seed,drift\n";
    for (std::size_t m = 0; m < disc.member_drift.size(); ++m)
      f << m << "," << ensemble.member_seed(static_cast<int>(m)) << "," << fmt(disc.member_drift[m]) << "\n";
  }
  s["gaussian"] = {{"a", a}, {"b", b}, {"c", cc}};
  s["N"] = N;
  s["b00"] = B.b(0, 0);
  s["b01"] = N > 1 ? B.b(0, 1) : 0.0;
  s["moment_crosscheck_error"] = B.crosscheck_error;
  s["cutoff_eps"] = eps;
  s["zero_tol"] = zero_tol;
  s["all_minors_connected"] = all_connected;
  s["connectivity"] = conn;
  s["mu"] = mu;
  s["eigenvalues"] = spec.gaps.eigenvalues;
  s["gaps"] = spec.gaps.gaps;
  s["truncation_shift"] = spec.max_shift;
  s["gap_normalization"] = "operator -d^2/dx^2 + x^2; unperturbed gaps equal 2";
  s["relation"] = {{"found", rel.has_value()},
                   {"coefficients", rel ? json(*rel) : json(nullptr)},
                   {"note", rel ? "refutes Q-linear independence at this precision"
                                : "no relation within the bound; evidence only"}};
  s["disc"] = {{"r0", c.number("disc.r0")},
               {"invariant", disc.invariant},
               {"max_drift", disc.max_drift},
               {"violations", disc.violations},
               {"crossings", disc.crossings}};
  return 0;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir, Exec exec) {
  RunResult result;
  json summary;
  summary["experiment"] = std::string(to_string(config.kind()));
  summary["config_hash"] = hex64(config.hash());
  summary["seed"] = config.seed();
  std::unique_ptr<Outputs> out;
  try {
    out = std::make_unique<Outputs>(config, out_dir);
    json body;
    switch (config.kind()) {
      case ExperimentKind::steer: result.status = run_steer(config, *out, body); break;
      case ExperimentKind::exit_time: result.status = run_exit(config, *out, body, exec); break;
      case ExperimentKind::wkb: result.status = run_wkb(config, *out, body, exec); break;
      case ExperimentKind::obstruction: result.status = run_obstruction(config, *out, body, exec); break;
      case ExperimentKind::spectral: result.status = run_spectral(config, *out, body, exec); break;
    }
    summary["status"] = result.status == 0 ? "ok" : "hypothesis_violated";
    summary["results"] = body;
  } catch (const Error& e) {
    result.status = e.code() == ErrorCode::HypothesisViolated ? 2 : 1;
    summary["status"] = result.status == 2 ? "hypothesis_violated" : "error";
    summary["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
  } catch (const std::exception& e) {
    result.status = 1;
    summary["status"] = "error";
    summary["error"] = {{"code", "Internal"}, {"message", e.what()}};
  }
  result.summary = summary.dump(2);
  if (out) {
    result.files = out->files;
    try {
      out->write_summary(summary);
      result.files.push_back("summary.json");
    } catch (const Error& e) {
      result.status = 1;
    }
  }
  return result;
}

}  // namespace sclab
