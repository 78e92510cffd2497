#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tracerlab/run.hpp"

using namespace tracerlab;
namespace fs = std::filesystem;

namespace {

RunConfig config_from(const std::vector<KeyOverride>& overrides) {
  const ParseResult r = parse_config("", overrides);
  REQUIRE_MESSAGE(r.ok(), r.message());
  return *r.config;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tracerlab_test_run_" + name);
  fs::remove_all(p);
  return p;
}

const std::vector<KeyOverride> kSmallRun{
    {"sim.step", "0.01"},
    {"sim.bridge_correction", "true"},
    {"censor.confirm_height", "10"},
    {"estimators.select", "gamma, backtrack, lln, renewal, bias, restart"},
    {"estimators.gamma.n_paths", "200"},
    {"estimators.backtrack.n_paths", "500"},
    {"estimators.backtrack.levels", "1, 2"},
    {"estimators.lln.n_paths", "50"},
    {"estimators.lln.horizon", "20"},
    {"estimators.renewal.n_cycles", "150"},
    {"estimators.renewal.burn_in", "1"},
    {"estimators.renewal.path_horizon", "300"},
    {"estimators.restart.n_paths", "200"},
    {"estimators.restart.k_max", "2"},
};

}  // namespace

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("field validation passes for admissible fields") {
  for (const char* alpha : {"0", "0.5", "0.9"}) {
    const FieldValidation v = validate_field(config_from(
        {{"field.alpha", alpha}, {"estimators.validate.n_points", "20000"}, {"estimators.validate.gradient_points", "300"}}));
    CHECK_MESSAGE(v.pass(), "alpha = " << alpha);
    CHECK(v.pass("A"));
    CHECK(v.pass("DR"));
    CHECK(v.pass("R"));
    CHECK(v.amplitude_violations == 0);
    CHECK(v.drift_floor_violations == 0);
    CHECK(v.gradient_bound_violations == 0);
    CHECK(v.max_gradient_error <= 1e-4);
  }
  const FieldValidation v3 = validate_field(config_from({{"field.dim", "3"},
                                                         {"field.mean_velocity", "0, 0, 1"},
                                                         {"field.alpha", "0.5"},
                                                         {"estimators.validate.n_points", "5000"},
                                                         {"estimators.validate.gradient_points", "100"}}));
  CHECK(v3.pass());
}

TEST_CASE("gradient error is zero for a constant field") {
  const RunConfig c = config_from({});
  const FieldRealization f = validation_field(c);
  CHECK(gradient_relative_error(f, Vec::Zero(2)) == 0.0);
}

TEST_CASE("validate-field writes a report") {
  const fs::path dir = scratch("validate");
  FieldValidation v;
  const RunOutcome out = run_validate_field(
      config_from({{"field.alpha", "0.5"}, {"estimators.validate.n_points", "2000"},
                   {"estimators.validate.gradient_points", "50"}}),
      dir, &v);
  CHECK(out.exit_code == kExitOk);
  CHECK(out.artifacts == std::vector<std::string>{"validation.json"});
  const auto j = nlohmann::json::parse(slurp(dir / "validation.json"));
  CHECK(j["pass"] == true);
  CHECK(j["conditions"]["DR"] == true);
  CHECK(j["entries"].size() == v.entries.size());
}

TEST_CASE("estimate writes deterministic artifacts and a manifest") {
  const RunConfig c = config_from(kSmallRun);
  const fs::path a = scratch("estimate_a"), b = scratch("estimate_b");
  const RunOutcome ra = run_estimate(c, 1, a);
  const RunOutcome rb = run_estimate(c, 3, b);
  CHECK(ra.exit_code == rb.exit_code);
  CHECK(ra.exit_code != kExitIo);
  REQUIRE(ra.artifacts == rb.artifacts);
  for (const auto& name : ra.artifacts) {
    if (name == "MANIFEST") continue;
    CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name);
  }
  for (const char* name : {"summary.json", "config.txt", "cycles.csv", "tail_curve.csv", "tail_curve.dat",
                           "restart_survival.dat", "MANIFEST"}) {
    CHECK_MESSAGE(fs::exists(a / name), name);
  }

  const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
  CHECK(summary["schema_version"] == kSummarySchemaVersion);
  CHECK(summary["exit_code"] == ra.exit_code);
  CHECK(summary["estimators"].contains("gamma"));
  CHECK_FALSE(summary["estimators"].contains("audit"));
  CHECK(summary["policy"]["confirm_height"] == 10.0);

  const std::string manifest = slurp(a / "MANIFEST");
  CHECK(manifest.find("tracerlab_version 1.0.0\n") != std::string::npos);
  CHECK(manifest.find("config_sha256 " + sha256_hex(serialize_config(c))) != std::string::npos);
  CHECK(manifest.find("file " + sha256_hex(slurp(a / "summary.json")) + "  summary.json\n") != std::string::npos);

  std::istringstream cycles(slurp(a / "cycles.csv"));
  std::string header;
  std::getline(cycles, header);
  CHECK(header.rfind("path_id,", 0) == 0);

  SUBCASE("report regenerates the plot files") {
    const std::string before = slurp(a / "tail_curve.dat");
    fs::remove(a / "tail_curve.dat");
    const RunOutcome r = render_report(a);
    CHECK(r.exit_code == kExitOk);
    CHECK(slurp(a / "tail_curve.dat") == before);
  }
}

TEST_CASE("too many restart levels is inconclusive") {
  const fs::path dir = scratch("restart");
  RunConfig c = config_from({{"estimators.select", "restart"},
                             {"estimators.restart.k_max", "20"},
                             {"estimators.restart.n_paths", "100"},
                             {"censor.confirm_height", "10"},
                             {"sim.step", "0.01"}});
  const RunOutcome out = run_estimate(c, 1, dir);
  CHECK(out.exit_code == kExitInconclusive);
  CHECK(out.inconclusive >= 1);
}

TEST_CASE("an unwritable output directory is an I/O error") {
  const fs::path file = scratch("blocker");
  std::ofstream(file) << "x";
  RunConfig c = config_from({{"estimators.select", "lln"}, {"estimators.lln.n_paths", "2"}});
  CHECK(run_estimate(c, 1, file / "sub").exit_code == kExitIo);
  CHECK(render_report(scratch("missing")).exit_code == kExitIo);
}

TEST_CASE("simulate writes paths and cycles") {
  const fs::path dir = scratch("simulate");
  RunConfig c = config_from({{"field.alpha", "0.5"},
                             {"sim.step", "0.01"},
                             {"sim.horizon", "100"},
                             {"censor.confirm_height", "10"},
                             {"estimators.simulate.n_paths", "3"}});
  const RunOutcome out = run_simulate(c, 2, dir, SimulateOptions{10, true});
  REQUIRE(out.exit_code == kExitOk);
  CHECK(fs::exists(dir / "path_2.bin"));
  std::istringstream paths(slurp(dir / "paths.csv"));
  std::string line;
  std::getline(paths, line);
  CHECK(line == "path_id,i,t,x0,x1,drift_proj");
  std::size_t rows = 0;
  while (std::getline(paths, line)) ++rows;
  CHECK(rows == 3 * 1001);
  std::ifstream bin(dir / "path_0.bin", std::ios::binary);
  const PathDump d = read_path_dump(bin);
  CHECK(d.positions.size() == 2 * 10001);
}
