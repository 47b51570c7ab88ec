#pragma once

#include "sclab/parallel.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sclab {

enum class ExperimentKind { steer, exit_time, wkb, obstruction, spectral };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_kind(std::string_view name);
std::vector<std::string> experiment_names();

struct ConfigEntry {
  std::string value;
  int line = 0;  // 0 for defaults and overrides
};

/// Flat `key = value` configuration with dotted section prefixes. After
/// parsing every schema key is present, defaults filled in.
class ExperimentConfig {
 public:
  ExperimentKind kind() const { return kind_; }
  std::uint64_t seed() const;
  std::string output_dir() const { return text("output"); }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::string text(const std::string& key) const;
  double number(const std::string& key) const;
  long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  /// Keys under `prefix.` with the prefix stripped.
  std::map<std::string, std::string> section(const std::string& prefix) const;
  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }

  /// Replaces a value and re-validates (command-line overrides).
  void set(const std::string& key, const std::string& value);

  /// Sorted `key = value` lines without the output directory.
  std::string canonical() const;
  std::uint64_t hash() const;

 private:
  friend ExperimentConfig parse_config(std::string_view text, std::optional<ExperimentKind> kind);
  void validate();

  ExperimentKind kind_ = ExperimentKind::steer;
  std::map<std::string, ConfigEntry> entries_;
};

/// ParseError (with line) for malformed text, ValidationError (with key) for
/// unknown keys, bad types and out-of-range values.
/// A given `kind` fills in a missing `experiment` key and must match a present one.
ExperimentConfig parse_config(std::string_view text, std::optional<ExperimentKind> kind = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind = std::nullopt);

/// Documented keys and defaults for one experiment kind, as config text.
std::string default_config_text(ExperimentKind kind);

std::uint64_t fnv1a(std::string_view data);

struct RunResult {
  int status = 0;  // 0 success, 1 error, 2 hypothesis violated
  std::string summary;  // JSON text also written to summary.json
  std::vector<std::string> files;
};

/// Runs the configured experiment, writing summary.json and the CSV tables
/// into `out_dir`. Library errors are mapped to status 1 (2 for
/// HypothesisViolated) with a JSON error record instead of propagating.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                         Exec exec = Exec::parallel);

}  // namespace sclab
