// tracerlab: simulate, estimate, validate-field, report.
//
// Config keys are overridden one-to-one with --section.key=value (or
// --section.key value).  TRACERLAB_OUTPUT_DIR replaces output.dir unless
// --output.dir is given.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tracerlab/config.hpp"
#include "tracerlab/run.hpp"

namespace {

constexpr int kExitUsage = 4;

bool is_override(const std::string& arg) {
  if (arg.rfind("--", 0) != 0) return false;
  const auto name = arg.substr(2, arg.find('=') == std::string::npos ? std::string::npos : arg.find('=') - 2);
  return name.find('.') != std::string::npos;
}

// Splits --section.key[=value] tokens out of argv.
std::vector<tracerlab::KeyOverride> extract_overrides(std::vector<std::string>& args, std::string& error) {
  std::vector<tracerlab::KeyOverride> overrides;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (!is_override(args[i])) {
      rest.push_back(args[i]);
      continue;
    }
    const auto eq = args[i].find('=');
    if (eq != std::string::npos) {
      overrides.emplace_back(args[i].substr(2, eq - 2), args[i].substr(eq + 1));
    } else if (i + 1 < args.size()) {
      overrides.emplace_back(args[i].substr(2), args[i + 1]);
      ++i;
    } else {
      error = "missing value for " + args[i];
    }
  }
  args = std::move(rest);
  return overrides;
}

void report_outcome(const tracerlab::RunOutcome& outcome, const std::string& dir) {
  if (!outcome.error.empty()) std::cerr << "error: " << outcome.error << '\n';
  for (const auto& a : outcome.artifacts) std::cout << dir << '/' << a << '\n';
  if (outcome.failed_checks > 0) std::cerr << outcome.failed_checks << " check(s) failed\n";
  if (outcome.inconclusive > 0) std::cerr << outcome.inconclusive << " inconclusive result(s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string override_error;
  auto overrides = extract_overrides(args, override_error);
  if (!override_error.empty()) {
    std::cerr << "error: " << override_error << '\n';
    return kExitUsage;
  }

  CLI::App app{"Monte Carlo laboratory for passive tracers in random velocity fields"};
  app.require_subcommand(1);
  std::string config_path;
  unsigned workers = tracerlab::default_workers();
  app.add_option("-c,--config", config_path, "Configuration file (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("-j,--jobs", workers, "Worker threads (outputs do not depend on it)")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Simulate paths; write paths.csv and cycles.csv");
  std::size_t stride = 1;
  bool dump = false;
  simulate->add_option("--stride", stride, "Write every n-th grid point to paths.csv")->check(CLI::PositiveNumber);
  simulate->add_flag("--dump", dump, "Also write little-endian binary path dumps");
  auto* estimate = app.add_subcommand("estimate", "Run the selected estimators; write summary.json and plot data");
  auto* validate = app.add_subcommand("validate-field", "Check the field conditions empirically");
  auto* report = app.add_subcommand("report", "Re-render plot data from an existing summary.json");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  bool dir_overridden = false;
  for (const auto& [key, value] : overrides) dir_overridden |= key == "output.dir";
  if (const char* env = std::getenv("TRACERLAB_OUTPUT_DIR"); env != nullptr && *env != '\0' && !dir_overridden) {
    overrides.insert(overrides.begin(), {"output.dir", env});
  }

  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    std::ostringstream s;
    s << in.rdbuf();
    if (!in && !in.eof()) {
      std::cerr << "error: cannot read " << config_path << '\n';
      return tracerlab::kExitIo;
    }
    text = s.str();
  }
  const tracerlab::ParseResult parsed = tracerlab::parse_config(text, overrides);
  if (!parsed.ok()) {
    std::cerr << "invalid configuration:\n" << parsed.message();
    return kExitUsage;
  }
  const tracerlab::RunConfig& config = *parsed.config;
  const std::string dir = config.output.dir;

  tracerlab::RunOutcome outcome;
  if (*simulate) {
    outcome = tracerlab::run_simulate(config, workers, dir, {stride, dump});
  } else if (*estimate) {
    outcome = tracerlab::run_estimate(config, workers, dir);
  } else if (*validate) {
    tracerlab::FieldValidation v;
    outcome = tracerlab::run_validate_field(config, dir, &v);
    for (const auto& e : v.entries) {
      std::cout << (e.pass ? "PASS " : "FAIL ") << '(' << e.condition << ") " << e.name << ": " << e.detail << '\n';
    }
  } else if (*report) {
    outcome = tracerlab::render_report(dir);
  }
  report_outcome(outcome, dir);
  return outcome.exit_code;
}
