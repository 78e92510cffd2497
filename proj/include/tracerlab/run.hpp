#pragma once

// Experiment orchestration behind the command-line tool.
//
// Artifacts written by run_estimate (formats permitting):
//   summary.json     every estimate with SE, n, ci95 and status, plus all checks
//   cycles.csv       post-burn-in regeneration cycles used by the renewal estimators
//   tail_curve.csv   backtrack probabilities per level
//   *.dat            two-column plot data, rendered from summary.json
//   config.txt       the canonical serialized configuration
//   MANIFEST         version, seed, config hash, timestamp and file checksums
//
// Every artifact except MANIFEST is a pure function of the configuration.

#include <filesystem>
#include <string>
#include <vector>

#include "tracerlab/config.hpp"

namespace tracerlab {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kSummarySchemaVersion = 1;

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitInconclusive = 2,
  kExitIo = 3,
};

struct ValidationEntry {
  std::string condition;  // "A", "DR" or "R"
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double reference = 0.0;
  std::size_t samples = 0;
  std::string detail;
};

struct FieldValidation {
  std::vector<ValidationEntry> entries;
  std::size_t amplitude_violations = 0;
  std::size_t drift_floor_violations = 0;
  std::size_t gradient_bound_violations = 0;
  double max_gradient_error = 0.0;  // relative, against central differences

  bool pass() const;
  bool pass(const std::string& condition) const;
};

// Field seed used by validation and quenched runs.
FieldRealization validation_field(const RunConfig& config);

// Relative step used by the finite-difference gradient check.
inline constexpr double kFiniteDifferenceStep = 1e-5;

// max |G_fd - G| / max(max |G|, 1e-3 U, 1e-300) with central differences.
double gradient_relative_error(const FieldRealization& field, const Vec& x, double fd_step = kFiniteDifferenceStep);

FieldValidation validate_field(const RunConfig& config);

struct RunOutcome {
  int exit_code = kExitOk;
  std::vector<std::string> artifacts;  // relative to the output directory, sorted
  std::string error;                   // set when exit_code == kExitIo
  std::size_t failed_checks = 0;
  std::size_t inconclusive = 0;
};

// Runs the selected estimators and writes artifacts to `outdir`.
RunOutcome run_estimate(const RunConfig& config, unsigned workers, const std::filesystem::path& outdir);

struct SimulateOptions {
  std::size_t stride = 1;   // write every stride-th grid point to paths.csv
  bool binary_dump = false;  // also write path_<id>.bin
};

// Simulates estimators.simulate.n_paths paths; writes paths.csv and cycles.csv.
RunOutcome run_simulate(const RunConfig& config, unsigned workers, const std::filesystem::path& outdir,
                        const SimulateOptions& options = {});

// Writes validation.json; exit 0 when every condition passes, 1 otherwise.
RunOutcome run_validate_field(const RunConfig& config, const std::filesystem::path& outdir,
                              FieldValidation* report = nullptr);

// Regenerates the .dat plot files from an existing summary.json.
RunOutcome render_report(const std::filesystem::path& outdir);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace tracerlab
