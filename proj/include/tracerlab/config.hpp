#pragma once

// Run configuration: a flat, sectioned key-value text format.
//
//   # comment
//   [field]
//   dim = 2
//   mean_velocity = 1, 0
//   alpha = 0.5
//
// Sections are [field], [sim], [censor], [estimators] and [output]; every key
// has a documented default (see README.md), so an empty file is a valid
// configuration.  Keys may be overridden as "section.key=value" pairs.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tracerlab/estimators.hpp"
#include "tracerlab/field.hpp"
#include "tracerlab/renewal.hpp"
#include "tracerlab/sde.hpp"

namespace tracerlab {

inline const std::vector<std::string>& known_estimators() {
  static const std::vector<std::string> names{"gamma", "backtrack", "max_mean", "hitting", "restart",
                                              "lln",   "renewal",   "bias",     "stationarity", "audit"};
  return names;
}

struct CensorSpec {
  double budget = 1e-6;
  std::optional<double> confirm_height;  // derived from the budget when unset
  double horizon = 20000.0;

  friend bool operator==(const CensorSpec&, const CensorSpec&) = default;
};

struct EstimatorKnobs {
  std::vector<std::string> selected = known_estimators();

  std::size_t gamma_paths = 10000;
  std::size_t backtrack_paths = 100000;
  std::vector<double> backtrack_levels{2.0, 4.0, 8.0};
  std::size_t max_mean_paths = 10000;
  std::size_t hitting_paths = 2000;
  double hitting_level = 0.0;  // 0 selects 10 r0
  std::size_t restart_paths = 10000;
  std::size_t restart_k_max = 4;
  std::size_t lln_paths = 200;
  double lln_horizon = 100.0;
  std::size_t renewal_burn_in = 5;
  std::size_t renewal_cycles = 2000;
  double renewal_path_horizon = 2000.0;
  std::size_t renewal_compare_burn_in = 0;  // 0 disables the burn-in comparison
  std::size_t stationarity_repetitions = 100;
  std::size_t stationarity_burn_in = 20;
  std::size_t stationarity_window = 100;
  double stationarity_alpha = 0.01;
  double stationarity_min_pass = 0.9;
  std::size_t audit_confirmations = 10000;
  std::size_t validate_points = 100000;
  std::size_t validate_gradient_points = 1000;
  std::size_t simulate_paths = 10;

  friend bool operator==(const EstimatorKnobs&, const EstimatorKnobs&) = default;
};

struct OutputSpec {
  std::string dir = "out";
  std::vector<std::string> formats{"csv", "json", "dat"};

  bool wants(std::string_view format) const;
  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct RunConfig {
  FieldSpec field;
  SimParams sim;
  Environment environment = Environment::kAnnealed;
  std::uint64_t master_seed = 1;
  CensorSpec censor;
  EstimatorKnobs estimators;
  OutputSpec output;

  CensorPolicy policy() const;
  Ensemble ensemble(unsigned workers) const;
  bool selected(std::string_view estimator) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ConfigError {
  std::string key;
  std::string reason;
};

struct ParseResult {
  std::optional<RunConfig> config;
  std::vector<ConfigError> errors;

  bool ok() const { return config.has_value(); }
  std::string message() const;
};

using KeyOverride = std::pair<std::string, std::string>;

ParseResult parse_config(std::string_view text, const std::vector<KeyOverride>& overrides = {});

// Canonical text form; parse_config(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& config);

}  // namespace tracerlab
