#include "sclab/error.hpp"
#include "sclab/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Overrides {
  std::optional<double> a, b, c, eps;
  std::optional<long> N;
  std::optional<long> count;
  std::optional<double> amplitude, horizon;
};

std::string number_text(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sclab: controlled Hamiltonian and Schrodinger numerics"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<long> seed;
  std::string out_dir;
  bool serial = false;
  bool print_defaults = false;
  Overrides ov;

  for (const auto& name : sclab::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "key = value config file (defaults when omitted)");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory (default: the config's output key)");
    sub->add_flag("--serial", serial, "use the serial reference kernels");
    sub->add_flag("--print-defaults", print_defaults, "print the documented defaults and exit");
    if (name == "spectral") {
      sub->add_option("--a", ov.a, "Gaussian coefficient a");
      sub->add_option("--b", ov.b, "Gaussian coefficient b");
      sub->add_option("--c", ov.c, "Gaussian coefficient c");
      sub->add_option("--eps", ov.eps, "cutoff half-width");
      sub->add_option("--N", ov.N, "basis truncation");
    }
    if (name == "exit-time") {
      sub->add_option("--count", ov.count, "ensemble size");
      sub->add_option("--amplitude", ov.amplitude, "control amplitude");
      sub->add_option("--horizon", ov.horizon, "time horizon");
    }
  }
  CLI11_PARSE(app, argc, argv);

  const std::string sub_name = app.get_subcommands().front()->get_name();
  const auto kind = sclab::parse_kind(sub_name);
  if (print_defaults) {
    std::cout << sclab::default_config_text(kind);
    return 0;
  }
  try {
    auto config = config_path.empty() ? sclab::parse_config("", kind) : sclab::load_config(config_path, kind);
    if (seed) config.set("seed", std::to_string(*seed));
    if (ov.a) config.set("spectral.a", number_text(*ov.a));
    if (ov.b) config.set("spectral.b", number_text(*ov.b));
    if (ov.c) config.set("spectral.c", number_text(*ov.c));
    if (ov.eps) config.set("spectral.eps", number_text(*ov.eps));
    if (ov.N) config.set("spectral.N", std::to_string(*ov.N));
    if (ov.count) config.set("ensemble.count", std::to_string(*ov.count));
    if (ov.amplitude) config.set("ensemble.amplitude", number_text(*ov.amplitude));
    if (ov.horizon) {
      config.set("exit.horizon", number_text(*ov.horizon));
      config.set("ensemble.duration", number_text(*ov.horizon));
    }
    const std::string dir = out_dir.empty() ? config.output_dir() : out_dir;
    const auto result =
        sclab::run_experiment(config, dir, serial ? sclab::Exec::serial : sclab::Exec::parallel);
    std::cout << result.summary << "\n";
    return result.status;
  } catch (const sclab::Error& e) {
    std::cerr << "sclab: " << e.what() << "\n";
    return 1;
  }
}
