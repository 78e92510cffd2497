#include "tracerlab/run.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>

#include <Eigen/SVD>
#include <json.hpp>

#include "tracerlab/drifted_bm.hpp"

namespace tracerlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kValidationTag = 0x5641;
constexpr std::uint64_t kQuenchedFieldTag = 0xF1E1D;
constexpr std::uint32_t kValidationDomain = 0x56000000u;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// d uniforms in [0, 1) for sample i of stream `purpose`.
Vec uniform_point(const PhiloxKey& key, std::uint64_t i, std::uint32_t purpose, int dim) {
  const auto lo = static_cast<std::uint32_t>(i);
  const auto hi = static_cast<std::uint32_t>(i >> 32);
  const PhiloxBlock b0 = philox_block({lo, hi, purpose, kValidationDomain}, key);
  const PhiloxBlock b1 = philox_block({lo, hi, purpose, kValidationDomain | 1u}, key);
  const std::uint64_t words[3] = {b0.a, b0.b, b1.a};
  Vec u(dim);
  for (int j = 0; j < dim; ++j) u[j] = to_unit(words[j]);
  return u;
}

std::array<double, 2> normal_pair(const PhiloxKey& key, std::uint64_t i, std::uint32_t purpose) {
  const auto lo = static_cast<std::uint32_t>(i);
  const auto hi = static_cast<std::uint32_t>(i >> 32);
  return box_muller(philox_block({lo, hi, purpose, kValidationDomain | 2u}, key));
}

// A point uniform in the support ball of a uniformly chosen cell's bump.
Vec point_in_bump(const FieldRealization& field, const PhiloxKey& key, std::uint64_t i, double box) {
  const int d = field.spec().dim;
  const Vec anchor = (uniform_point(key, i, 3, d).array() - 0.5).matrix() * box;
  const Bump b = field.bump(field.cell_of(anchor));
  const auto n01 = normal_pair(key, i, 4);
  const auto n23 = normal_pair(key, i, 5);
  const double normals[4] = {n01[0], n01[1], n23[0], n23[1]};
  Vec dir(d);
  for (int j = 0; j < d; ++j) dir[j] = normals[j];
  const double len = dir.norm();
  if (!(len > 0.0)) return b.center;
  const double radius = field.spec().bump_radius * std::pow(uniform_point(key, i, 6, 1)[0], 1.0 / d);
  return b.center + (radius / len) * dir;
}

bool counters_disjoint(const CellIndex& a, const CellIndex& b) {
  for (std::uint32_t i = 0; i < 4; ++i) {
    for (std::uint32_t j = 0; j < 4; ++j) {
      if (bump_counter(a, i) == bump_counter(b, j)) return false;
    }
  }
  return true;
}

json estimate_json(const Estimate& e) {
  json j{{"name", e.name}, {"value", e.value},       {"std_error", e.std_error},
         {"n", e.n},       {"ci95", e.ci95()},      {"status", to_string(e.status)}};
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

json check_json(const Check& c) {
  return json{{"name", c.name},           {"kind", to_string(c.kind)}, {"observed", c.observed},
              {"reference", c.reference}, {"tolerance", c.tolerance},  {"pass", c.pass}};
}

// Accumulates one estimator's JSON node and the run-wide tallies.
class Summary {
 public:
  json& node(const std::string& estimator) { return root_[estimator]; }

  void add_estimate(const std::string& estimator, const Estimate& e) {
    node(estimator)["estimates"].push_back(estimate_json(e));
    if (!e.ok()) ++inconclusive_;
  }
  void add_check(const std::string& estimator, const Check& c) {
    node(estimator)["checks"].push_back(check_json(c));
    if (!c.pass) ++failed_;
  }
  void add_checks(const std::string& estimator, const std::vector<Check>& checks) {
    for (const auto& c : checks) add_check(estimator, c);
  }
  void mark_inconclusive(const std::string& estimator, const std::string& reason) {
    node(estimator)["status"] = "inconclusive";
    node(estimator)["note"] = reason;
    ++inconclusive_;
  }
  void finish(const std::string& estimator) {
    json& n = node(estimator);
    if (n.contains("status")) return;
    bool any_fail = false;
    bool any_inconclusive = false;
    if (n.contains("checks")) {
      for (const auto& c : n["checks"]) any_fail |= !c["pass"].get<bool>();
    }
    if (n.contains("estimates")) {
      for (const auto& e : n["estimates"]) any_inconclusive |= e["status"] != "ok";
    }
    n["status"] = any_fail ? "fail" : any_inconclusive ? "inconclusive" : "pass";
  }

  const json& root() const { return root_; }
  std::size_t failed() const { return failed_; }
  std::size_t inconclusive() const { return inconclusive_; }

 private:
  json root_ = json::object();
  std::size_t failed_ = 0;
  std::size_t inconclusive_ = 0;
};

double tolerance3(double se) { return 3.0 * se; }

bool write_text(const fs::path& path, const std::string& text, std::string& error) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) {
    error = "cannot write " + path.string();
    return false;
  }
  return true;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// MANIFEST lists every artifact with its SHA-256; written last.
bool write_manifest(const fs::path& dir, const RunConfig& config, std::vector<std::string>& artifacts, int exit_code,
                    std::string& error) {
  std::sort(artifacts.begin(), artifacts.end());
  std::ostringstream m;
  m << "tracerlab_version " << kVersion << '\n';
  m << "summary_schema_version " << kSummarySchemaVersion << '\n';
  m << "timestamp " << utc_timestamp() << '\n';
  m << "master_seed " << config.master_seed << '\n';
  m << "config_sha256 " << sha256_hex(serialize_config(config)) << '\n';
  m << "exit_code " << exit_code << '\n';
  try {
    for (const auto& name : artifacts) m << "file " << sha256_hex(read_file(dir / name)) << "  " << name << '\n';
  } catch (const std::exception& e) {
    error = e.what();
    return false;
  }
  if (!write_text(dir / "MANIFEST", m.str(), error)) return false;
  artifacts.push_back("MANIFEST");
  return true;
}

bool prepare_dir(const fs::path& dir, std::string& error) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    error = "cannot create output directory " + dir.string() + ": " + ec.message();
    return false;
  }
  return true;
}

// Two-column plot data derived from the summary.
std::vector<std::pair<std::string, std::string>> plot_files(const json& summary) {
  std::vector<std::pair<std::string, std::string>> files;
  const json& est = summary.at("estimators");
  auto two_col = [](const std::string& header, const std::vector<std::pair<double, double>>& rows) {
    std::string out = "# " + header + '\n';
    for (const auto& [x, y] : rows) out += fmt(x) + ' ' + fmt(y) + '\n';
    return out;
  };
  if (est.contains("backtrack") && est["backtrack"].contains("points")) {
    std::vector<std::pair<double, double>> prob, bound;
    for (const auto& p : est["backtrack"]["points"]) {
      prob.emplace_back(p["level"].get<double>(), p["probability"]["value"].get<double>());
      bound.emplace_back(p["level"].get<double>(), p["bound"].get<double>());
    }
    files.emplace_back("tail_curve.dat", two_col("level backtrack_probability", prob));
    files.emplace_back("tail_bound.dat", two_col("level retraction_tail_bound", bound));
  }
  if (est.contains("max_mean") && est["max_mean"].contains("dyadic")) {
    std::vector<std::pair<double, double>> rows;
    for (const auto& m : est["max_mean"]["dyadic"]) {
      rows.emplace_back(m["exponent"].get<double>(), m["mass"]["value"].get<double>());
    }
    files.emplace_back("max_dyadic_mass.dat", two_col("exponent mass", rows));
  }
  if (est.contains("restart") && est["restart"].contains("survival")) {
    std::vector<std::pair<double, double>> prob, bound;
    for (const auto& s : est["restart"]["survival"]) {
      prob.emplace_back(s["k"].get<double>(), s["probability"]["value"].get<double>());
      bound.emplace_back(s["k"].get<double>(), s["bound"].get<double>());
    }
    files.emplace_back("restart_survival.dat", two_col("k probability", prob));
    files.emplace_back("restart_bound.dat", two_col("k geometric_bound", bound));
  }
  if (est.contains("stationarity") && est["stationarity"].contains("repetitions")) {
    std::vector<std::pair<double, double>> dur, disp;
    double rep = 0.0;
    for (const auto& r : est["stationarity"]["repetitions"]) {
      dur.emplace_back(rep, r["p_duration"].get<double>());
      disp.emplace_back(rep, r["p_displacement"].get<double>());
      rep += 1.0;
    }
    files.emplace_back("stationarity_p_duration.dat", two_col("repetition p_value", dur));
    files.emplace_back("stationarity_p_displacement.dat", two_col("repetition p_value", disp));
  }
  return files;
}

void write_cycles_csv(std::ostream& out, const CycleCollection& collection, const FieldSpec& spec) {
  write_cycle_csv_header(out, spec.dim);
  const Vec dir = spec.direction();
  for (const auto& c : collection.cycles) {
    out << c.path_id << ',' << c.index << ',' << fmt(c.start_time) << ',' << fmt(c.duration);
    for (int j = 0; j < spec.dim; ++j) out << ',' << fmt(c.displacement[j]);
    out << ',' << fmt(dir.dot(c.displacement)) << ",0\n";
  }
}

std::string tail_curve_csv(const TailCurve& curve) {
  std::string out = "level,probability,std_error,n,bound,estimable,pass\n";
  for (const auto& p : curve.points) {
    out += fmt(p.level) + ',' + fmt(p.probability.value) + ',' + fmt(p.probability.std_error) + ',' +
           std::to_string(p.probability.n) + ',' + fmt(p.bound) + ',' + (p.estimable ? "1" : "0") + ',' +
           (p.check.pass ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Field validation

bool FieldValidation::pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const ValidationEntry& e) { return e.pass; });
}

bool FieldValidation::pass(const std::string& condition) const {
  return std::all_of(entries.begin(), entries.end(),
                     [&](const ValidationEntry& e) { return e.condition != condition || e.pass; });
}

FieldRealization validation_field(const RunConfig& config) {
  return FieldRealization(config.field, derive_seed(config.master_seed, kQuenchedFieldTag, 0));
}

double gradient_relative_error(const FieldRealization& field, const Vec& x, double fd_step) {
  const int d = field.spec().dim;
  const Mat g = field.gradient(x);
  Mat fd(d, d);
  for (int j = 0; j < d; ++j) {
    Vec xp = x, xm = x;
    xp[j] += fd_step;
    xm[j] -= fd_step;
    fd.col(j) = (field.velocity(xp) - field.velocity(xm)) / (xp[j] - xm[j]);
  }
  const double scale = std::max({g.cwiseAbs().maxCoeff(), 1e-3 * field.spec().gradient_bound(), 1e-300});
  return (fd - g).cwiseAbs().maxCoeff() / scale;
}

FieldValidation validate_field(const RunConfig& config) {
  const FieldSpec& spec = config.field;
  const int d = spec.dim;
  const FieldRealization field = validation_field(config);
  const PhiloxKey key = make_key(derive_seed(config.master_seed, kValidationTag, 0));
  const std::size_t n = config.estimators.validate_points;
  const std::size_t n_grad = config.estimators.validate_gradient_points;
  // Box wide enough that sample points rarely share a cell, so the iid
  // standard error of the spatial mean is honest.
  const double box = spec.cell_side * 10.0 * std::ceil(std::pow(static_cast<double>(std::max<std::size_t>(n, 1)),
                                                                1.0 / d));
  const double alpha = spec.bump_amplitude_cap;
  const double delta = spec.drift_floor();
  const double bound = spec.gradient_bound();
  const Vec vhat = spec.direction();

  FieldValidation report;
  auto add = [&](std::string cond, std::string name, bool pass, double observed, double reference,
                 std::size_t samples, std::string detail) {
    report.entries.push_back(
        {std::move(cond), std::move(name), pass, observed, reference, samples, std::move(detail)});
  };

  add("A", "mean_dominates_fluctuation", alpha < spec.speed(), alpha, spec.speed(), 0, "alpha < |v|");

  double max_dev = 0.0, min_proj = std::numeric_limits<double>::infinity(), max_norm = 0.0;
  std::size_t provenance_overlaps = 0, confinement_violations = 0;
  Vec sum = Vec::Zero(d), sum_sq = Vec::Zero(d);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = (uniform_point(key, i, 0, d).array() - 0.5).matrix() * box;
    const CellIndex cell = field.cell_of(x);
    const Bump b = field.bump(cell);
    const Vec u = field.velocity(x);
    const double dev = (u - spec.mean_velocity).norm();
    const double proj = u.dot(vhat);
    max_dev = std::max(max_dev, dev);
    min_proj = std::min(min_proj, proj);
    if (dev > alpha) ++report.amplitude_violations;
    if (proj < delta) ++report.drift_floor_violations;
    sum += u;
    sum_sq += u.cwiseProduct(u);

    const double op_norm = Eigen::JacobiSVD<Mat>(field.gradient(x)).singularValues()(0);
    max_norm = std::max(max_norm, op_norm);
    if (op_norm > bound * (1.0 + 1e-12)) ++report.gradient_bound_violations;

    const Vec corner = field.cell_lower_corner(cell);
    for (int j = 0; j < d; ++j) {
      if (b.center[j] - corner[j] < spec.bump_radius || corner[j] + spec.cell_side - b.center[j] < spec.bump_radius) {
        ++confinement_violations;
        break;
      }
    }
    Vec y = x;
    y[static_cast<int>(i % static_cast<std::size_t>(d))] += spec.cell_side;
    if (!counters_disjoint(cell, field.cell_of(y))) ++provenance_overlaps;
  }
  add("A", "amplitude_cap", report.amplitude_violations == 0, max_dev, alpha, n,
      std::to_string(report.amplitude_violations) + " points with |u - v| > alpha");
  add("A", "drift_floor", report.drift_floor_violations == 0, min_proj, delta, n,
      std::to_string(report.drift_floor_violations) + " points with u . v-hat < delta");
  const double nd = static_cast<double>(n);
  for (int j = 0; j < d; ++j) {
    const double mean = sum[j] / nd;
    const double var = n > 1 ? std::max(0.0, (sum_sq[j] - nd * mean * mean) / (nd - 1.0)) : 0.0;
    const double se = std::sqrt(var / nd);
    add("A", "spatial_mean_" + std::to_string(j), std::abs(mean - spec.mean_velocity[j]) <= 3.0 * se, mean,
        spec.mean_velocity[j], n, "within 3 SE of v (SE " + fmt(se) + ")");
  }

  add("DR", "cell_side_covers_bump", spec.cell_side >= 2.0 * spec.bump_radius, spec.cell_side,
      2.0 * spec.bump_radius, 0, "L >= 2 rho; dependence range r0 = " + fmt(spec.dependence_range()));
  add("DR", "bump_confinement", confinement_violations == 0, static_cast<double>(confinement_violations), 0.0, n,
      "bump centers at least rho from every face of their cell");
  add("DR", "cell_provenance", provenance_overlaps == 0, static_cast<double>(provenance_overlaps), 0.0, n,
      "neighbouring cells draw from disjoint counters");

  add("R", "gradient_bound", report.gradient_bound_violations == 0, max_norm, bound, n,
      std::to_string(report.gradient_bound_violations) + " points with |grad u| > U");
  for (std::size_t i = 0; i < n_grad; ++i) {
    const Vec x = (i % 2 == 0) ? Vec((uniform_point(key, i, 1, d).array() - 0.5).matrix() * box)
                               : point_in_bump(field, key, i, box);
    report.max_gradient_error = std::max(report.max_gradient_error, gradient_relative_error(field, x));
  }
  add("R", "gradient_finite_difference", report.max_gradient_error <= 1e-4, report.max_gradient_error, 1e-4, n_grad,
      "central differences with step 1e-5, half the points inside bumps");
  return report;
}

// ---------------------------------------------------------------------------
// Estimate

RunOutcome run_estimate(const RunConfig& config, unsigned workers, const fs::path& outdir) {
  RunOutcome outcome;
  if (!prepare_dir(outdir, outcome.error)) {
    outcome.exit_code = kExitIo;
    return outcome;
  }
  const FieldSpec& spec = config.field;
  const EstimatorKnobs& knobs = config.estimators;
  const Ensemble ens = config.ensemble(workers);
  const CensorPolicy policy = config.policy();
  const bool constant = spec.bump_amplitude_cap == 0.0;
  const double mu = spec.speed();
  const double kappa = config.sim.kappa;
  const double r0 = spec.dependence_range();
  const double gamma_exact = drifted_bm::escape_probability(mu, kappa);

  Summary s;
  std::optional<GammaResult> gamma;
  auto run_gamma = [&] {
    if (!gamma) gamma = estimate_gamma(ens, policy, knobs.gamma_paths);
    return *gamma;
  };
  std::optional<CycleCollection> cycles;
  auto run_cycles = [&]() -> const CycleCollection& {
    if (!cycles) {
      cycles = collect_cycles(ens, policy, knobs.renewal_burn_in, knobs.renewal_cycles, knobs.renewal_path_horizon);
    }
    return *cycles;
  };
  std::optional<VectorEstimate> lln;
  std::optional<DriftReport> renewal;

  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const std::invalid_argument& e) {
      s.mark_inconclusive(name, e.what());
    }
    s.finish(name);
  };

  if (config.selected("gamma")) {
    guarded("gamma", [&] {
      const GammaResult& g = run_gamma();
      s.add_estimate("gamma", g.gamma);
      s.node("gamma")["counts"] = {{"confirmed", g.confirmed}, {"finite", g.finite}, {"censored", g.censored}};
      s.add_checks("gamma", g.checks);
      if (constant && g.gamma.ok()) {
        s.add_check("gamma", make_check("drifted_bm_escape_probability", CheckKind::kMatch, g.gamma.value,
                                        gamma_exact, tolerance3(g.gamma.std_error)));
      }
    });
  }

  if (config.selected("backtrack")) {
    guarded("backtrack", [&] {
      const TailCurve curve = backtrack_tail(ens, knobs.backtrack_levels, knobs.backtrack_paths, config.sim.horizon);
      json points = json::array();
      for (const auto& p : curve.points) {
        points.push_back({{"level", p.level},
                          {"probability", estimate_json(p.probability)},
                          {"bound", p.bound},
                          {"estimable", p.estimable}});
        s.add_check("backtrack", p.check);
        if (constant) {
          s.add_check("backtrack", make_check("drifted_bm_exit_probability_M" + fmt(p.level), CheckKind::kMatch,
                                              p.probability.value,
                                              drifted_bm::backtrack_probability(mu, kappa, p.level),
                                              tolerance3(p.probability.std_error)));
        }
      }
      s.node("backtrack")["points"] = points;
      s.node("backtrack")["undecided"] = curve.undecided;
      s.node("backtrack")["tail_curve_csv"] = tail_curve_csv(curve);
    });
  }

  if (config.selected("max_mean")) {
    guarded("max_mean", [&] {
      const MaxMeanResult r = conditional_max_mean(ens, policy, knobs.max_mean_paths);
      s.add_estimate("max_mean", r.truncated_mean);
      json dyadic = json::array();
      for (const auto& m : r.dyadic) dyadic.push_back({{"exponent", m.exponent}, {"mass", estimate_json(m.mass)}});
      s.node("max_mean")["dyadic"] = dyadic;
      s.add_checks("max_mean", r.checks);
      if (constant && r.truncated_mean.ok()) {
        s.add_check("max_mean", make_check("drifted_bm_truncated_max_mean", CheckKind::kMatch, r.truncated_mean.value,
                                           drifted_bm::truncated_max_mean(mu, kappa),
                                           tolerance3(r.truncated_mean.std_error)));
      }
    });
  }

  if (config.selected("hitting")) {
    guarded("hitting", [&] {
      const double level = knobs.hitting_level > 0.0 ? knobs.hitting_level : 10.0 * r0;
      const HittingResult r = hitting_time_ratio(ens, level, knobs.hitting_paths, config.sim.horizon);
      s.add_estimate("hitting", r.ratio);
      s.node("hitting")["level"] = r.level;
      s.node("hitting")["censored"] = r.censored;
      s.node("hitting")["ratio_regime"] = r.ratio_regime;
      s.add_checks("hitting", r.checks);
      if (constant && r.ratio.ok()) {
        s.add_check("hitting", make_check("wald_mean_passage", CheckKind::kMatch, r.ratio.value,
                                          drifted_bm::mean_passage_time(mu, 1.0), tolerance3(r.ratio.std_error)));
      }
    });
  }

  if (config.selected("restart")) {
    guarded("restart", [&] {
      const GammaResult& g = run_gamma();
      const double gamma_lower = g.gamma.ok() ? std::max(0.0, g.gamma.ci95()[0]) : 0.0;
      const RestartResult r = restart_survival(ens, policy, knobs.restart_k_max, knobs.restart_paths, gamma_lower);
      s.add_estimate("restart", g.gamma);
      if (r.status != EstimateStatus::kOk) {
        s.mark_inconclusive("restart", r.note);
        return;
      }
      json survival = json::array();
      for (std::size_t k = 0; k < r.survival.size(); ++k) {
        survival.push_back({{"k", k},
                            {"probability", estimate_json(r.survival[k])},
                            {"bound", std::pow(1.0 - gamma_lower, static_cast<double>(k))}});
        if (!r.survival[k].ok()) s.add_estimate("restart", r.survival[k]);
        if (constant && k >= 1) {
          s.add_check("restart", make_check("geometric_law_k" + std::to_string(k), CheckKind::kMatch,
                                            r.survival[k].value,
                                            std::pow(1.0 - gamma_exact, static_cast<double>(k)),
                                            tolerance3(r.survival[k].std_error)));
        }
      }
      s.node("restart")["survival"] = survival;
      s.node("restart")["gamma_lower"] = gamma_lower;
      s.add_checks("restart", r.checks);
    });
  }

  if (config.selected("lln")) {
    guarded("lln", [&] {
      lln = stokes_drift_lln(ens, knobs.lln_horizon, knobs.lln_paths);
      for (const auto& e : lln->components) s.add_estimate("lln", e);
      if (constant) {
        for (int j = 0; j < spec.dim; ++j) {
          const Estimate& e = lln->components[static_cast<std::size_t>(j)];
          s.add_check("lln", make_check("constant_field_drift_" + std::to_string(j), CheckKind::kMatch, e.value,
                                        spec.mean_velocity[j], tolerance3(e.std_error)));
        }
      }
    });
  }

  if (config.selected("renewal")) {
    guarded("renewal", [&] {
      renewal = drift_from_cycles(run_cycles(), spec.dim, knobs.renewal_burn_in);
      for (const auto& e : renewal->v_renewal.components) s.add_estimate("renewal", e);
      for (const auto& e : renewal->w_star.components) s.add_estimate("renewal", e);
      s.add_estimate("renewal", renewal->t_star);
      s.node("renewal")["burn_in"] = renewal->burn_in;
      s.node("renewal")["paths"] = renewal->n_paths;
      if (renewal->status != EstimateStatus::kOk) return;
      for (int j = 0; j < spec.dim; ++j) {
        const Estimate& e = renewal->v_renewal.components[static_cast<std::size_t>(j)];
        if (constant) {
          s.add_check("renewal", make_check("constant_field_drift_" + std::to_string(j), CheckKind::kMatch, e.value,
                                            spec.mean_velocity[j], tolerance3(e.std_error)));
        }
        if (lln) {
          const Estimate& l = lln->components[static_cast<std::size_t>(j)];
          s.add_check("renewal", make_check("lln_agreement_" + std::to_string(j), CheckKind::kMatch, e.value, l.value,
                                            tolerance3(combined_se(e.std_error, l.std_error))));
        }
      }
      if (knobs.renewal_compare_burn_in > 0) {
        const CycleCollection other = collect_cycles(ens, policy, knobs.renewal_compare_burn_in, knobs.renewal_cycles,
                                                     knobs.renewal_path_horizon, StreamTag::kRenewal);
        const DriftReport cmp = drift_from_cycles(other, spec.dim, knobs.renewal_compare_burn_in);
        for (const auto& e : cmp.v_renewal.components) {
          Estimate named = e;
          named.name += "_burn_in_" + std::to_string(knobs.renewal_compare_burn_in);
          s.add_estimate("renewal", named);
        }
        if (cmp.status == EstimateStatus::kOk) {
          for (int j = 0; j < spec.dim; ++j) {
            const Estimate& a = renewal->v_renewal.components[static_cast<std::size_t>(j)];
            const Estimate& b = cmp.v_renewal.components[static_cast<std::size_t>(j)];
            s.add_check("renewal", make_check("burn_in_insensitivity_" + std::to_string(j), CheckKind::kMatch, a.value,
                                              b.value, tolerance3(combined_se(a.std_error, b.std_error))));
          }
        }
      }
    });
  }

  if (config.selected("bias")) {
    guarded("bias", [&] {
      const Estimate bias = lagrangian_bias_from_cycles(run_cycles(), spec);
      s.add_estimate("bias", bias);
      if (!bias.ok()) return;
      if (constant) {
        s.add_check("bias", make_check("constant_field_zero", CheckKind::kMatch, bias.value, 0.0,
                                       std::max(tolerance3(bias.std_error), 1e-9 * mu)));
      }
      const DriftReport r = renewal ? *renewal : drift_from_cycles(run_cycles(), spec.dim, knobs.renewal_burn_in);
      if (r.status == EstimateStatus::kOk) {
        const Vec vhat = spec.direction();
        const double drift = vhat.dot(r.v_renewal.value());
        const double drift_se = vhat.cwiseProduct(r.v_renewal.std_error()).norm();
        s.add_check("bias", make_check("renewal_drift_identity", CheckKind::kMatch, bias.value, drift - mu,
                                       std::max(tolerance3(combined_se(bias.std_error, drift_se)), 1e-9 * mu)));
      }
    });
  }

  if (config.selected("stationarity")) {
    guarded("stationarity", [&] {
      const StationaritySummary st =
          stationarity_repetitions(ens, policy, knobs.stationarity_burn_in, knobs.stationarity_window,
                                   knobs.stationarity_repetitions, knobs.stationarity_alpha);
      const std::size_t reps = knobs.stationarity_repetitions;
      json repetitions = json::array();
      for (const auto& r : st.reports) {
        repetitions.push_back({{"ks_duration", r.duration.statistic},
                               {"p_duration", r.duration.p_value},
                               {"ks_displacement", r.displacement.statistic},
                               {"p_displacement", r.displacement.p_value},
                               {"duration_lag1", r.duration_lag1}});
      }
      s.node("stationarity")["repetitions"] = repetitions;
      Estimate frac = proportion("pass_fraction", st.passes, reps);
      if (st.incomplete > 0) {
        frac.status = EstimateStatus::kInconclusive;
        frac.note = std::to_string(st.incomplete) + " repetitions lacked burn_in + 2 window cycles";
      }
      s.add_estimate("stationarity", frac);
      if (frac.ok()) {
        s.add_check("stationarity", make_check("ks_pass_fraction", CheckKind::kLower, frac.value,
                                               knobs.stationarity_min_pass, 0.0));
      }
    });
  }

  if (config.selected("audit")) {
    guarded("audit", [&] {
      const AuditResult a = misclassification_audit(ens, policy, knobs.audit_confirmations, policy.confirm_height);
      Estimate frac = proportion("late_retraction_fraction", a.later_retractions, a.confirmations);
      if (a.confirmations < knobs.audit_confirmations) {
        frac.status = EstimateStatus::kInconclusive;
        frac.note = "only " + std::to_string(a.confirmations) + " confirmations gathered";
      }
      s.add_estimate("audit", frac);
      s.node("audit")["paths"] = a.paths;
      s.node("audit")["extended_height"] = a.extended_height;
      s.node("audit")["later_retractions"] = a.later_retractions;
      if (frac.ok()) {
        s.add_check("audit", make_check("within_ten_budgets", CheckKind::kUpper, frac.value, 10.0 * policy.budget, 0.0));
      }
    });
  }

  outcome.failed_checks = s.failed();
  outcome.inconclusive = s.inconclusive();
  outcome.exit_code = s.failed() > 0 ? kExitCheckFailed : s.inconclusive() > 0 ? kExitInconclusive : kExitOk;

  json estimators = s.root();
  std::string tail_csv;
  if (estimators.contains("backtrack") && estimators["backtrack"].contains("tail_curve_csv")) {
    tail_csv = estimators["backtrack"]["tail_curve_csv"].get<std::string>();
    estimators["backtrack"].erase("tail_curve_csv");
  }
  json summary{{"schema_version", kSummarySchemaVersion},
               {"master_seed", config.master_seed},
               {"environment", to_string(config.environment)},
               {"field",
                {{"dim", spec.dim},
                 {"speed", mu},
                 {"drift_floor", spec.drift_floor()},
                 {"dependence_range", r0},
                 {"gradient_bound", spec.gradient_bound()}}},
               {"policy",
                {{"confirm_height", policy.confirm_height},
                 {"horizon", policy.horizon},
                 {"budget", policy.budget},
                 {"misclassification_bound", policy.misclassification_bound(spec.drift_floor(), spec.dim)},
                 {"within_budget", policy.within_budget(spec.drift_floor(), spec.dim)}}},
               {"estimators", estimators},
               {"failed_checks", s.failed()},
               {"inconclusive", s.inconclusive()},
               {"exit_code", outcome.exit_code}};

  auto emit = [&](const std::string& name, const std::string& text) {
    if (outcome.exit_code == kExitIo) return;
    if (!write_text(outdir / name, text, outcome.error)) {
      outcome.exit_code = kExitIo;
      return;
    }
    outcome.artifacts.push_back(name);
  };
  emit("config.txt", serialize_config(config));
  if (config.output.wants("json")) emit("summary.json", summary.dump(2) + '\n');
  if (config.output.wants("csv")) {
    if (cycles) {
      std::ostringstream csv;
      write_cycles_csv(csv, *cycles, spec);
      emit("cycles.csv", csv.str());
    }
    if (!tail_csv.empty()) emit("tail_curve.csv", tail_csv);
  }
  if (config.output.wants("dat")) {
    for (const auto& [name, text] : plot_files(summary)) emit(name, text);
  }
  if (outcome.exit_code == kExitIo) return outcome;
  if (!write_manifest(outdir, config, outcome.artifacts, outcome.exit_code, outcome.error)) outcome.exit_code = kExitIo;
  return outcome;
}

// ---------------------------------------------------------------------------
// Simulate

RunOutcome run_simulate(const RunConfig& config, unsigned workers, const fs::path& outdir,
                        const SimulateOptions& options) {
  RunOutcome outcome;
  if (!prepare_dir(outdir, outcome.error)) {
    outcome.exit_code = kExitIo;
    return outcome;
  }
  const Ensemble ens = config.ensemble(workers);
  const CensorPolicy policy = config.policy();
  const int d = config.field.dim;
  const double r0 = config.field.dependence_range();
  const std::size_t stride = std::max<std::size_t>(options.stride, 1);

  std::ofstream paths(outdir / "paths.csv", std::ios::binary);
  std::ofstream cycles(outdir / "cycles.csv", std::ios::binary);
  paths << "path_id,i,t";
  for (int j = 0; j < d; ++j) paths << ",x" << j;
  paths << ",drift_proj\n";
  write_cycle_csv_header(cycles, d);

  const std::size_t n = config.estimators.simulate_paths;
  const std::size_t batch = std::max<unsigned>(ens.workers, 1u);
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t count = std::min(batch, n - first);
    auto blobs = parallel_map(count, ens.workers, [&](std::size_t b) {
      const std::size_t id = first + b;
      const FieldRealization field = ens.field_for(StreamTag::kSimulate, id);
      const SimOutcome sim = simulate(field, config.sim, ens.origin(), never_stop,
                                      ens.stream_for(StreamTag::kSimulate, id), NoiseStorage::kDiscard);
      std::ostringstream p, c, dump;
      for (std::size_t i = 0; i < sim.path.size(); i += stride) {
        p << id << ',' << i << ',' << fmt(sim.path.time(i));
        const Vec x = sim.path.position(i);
        for (int j = 0; j < d; ++j) p << ',' << fmt(x[j]);
        p << ',' << fmt(sim.path.projection(i)) << '\n';
      }
      write_cycle_csv_rows(c, id, extract_regenerations(sim.path, r0, policy), sim.path);
      if (options.binary_dump) write_path_dump(sim.path, dump);
      return std::array<std::string, 3>{p.str(), c.str(), dump.str()};
    });
    for (std::size_t b = 0; b < count; ++b) {
      paths << blobs[b][0];
      cycles << blobs[b][1];
      if (options.binary_dump) {
        const std::string name = "path_" + std::to_string(first + b) + ".bin";
        if (!write_text(outdir / name, blobs[b][2], outcome.error)) {
          outcome.exit_code = kExitIo;
          return outcome;
        }
        outcome.artifacts.push_back(name);
      }
    }
  }
  paths.close();
  cycles.close();
  if (!paths || !cycles) {
    outcome.exit_code = kExitIo;
    outcome.error = "cannot write paths.csv or cycles.csv in " + outdir.string();
    return outcome;
  }
  outcome.artifacts.push_back("paths.csv");
  outcome.artifacts.push_back("cycles.csv");
  if (!write_text(outdir / "config.txt", serialize_config(config), outcome.error)) {
    outcome.exit_code = kExitIo;
    return outcome;
  }
  outcome.artifacts.push_back("config.txt");
  if (!write_manifest(outdir, config, outcome.artifacts, outcome.exit_code, outcome.error)) outcome.exit_code = kExitIo;
  return outcome;
}

// ---------------------------------------------------------------------------
// Validate and report

RunOutcome run_validate_field(const RunConfig& config, const fs::path& outdir, FieldValidation* out) {
  RunOutcome outcome;
  const FieldValidation v = validate_field(config);
  if (out != nullptr) *out = v;
  json entries = json::array();
  for (const auto& e : v.entries) {
    entries.push_back({{"condition", e.condition},
                       {"name", e.name},
                       {"pass", e.pass},
                       {"observed", e.observed},
                       {"reference", e.reference},
                       {"samples", e.samples},
                       {"detail", e.detail}});
  }
  json report{{"schema_version", kSummarySchemaVersion},
              {"conditions", {{"A", v.pass("A")}, {"DR", v.pass("DR")}, {"R", v.pass("R")}}},
              {"entries", entries},
              {"pass", v.pass()}};
  outcome.exit_code = v.pass() ? kExitOk : kExitCheckFailed;
  outcome.failed_checks = static_cast<std::size_t>(
      std::count_if(v.entries.begin(), v.entries.end(), [](const ValidationEntry& e) { return !e.pass; }));
  if (!prepare_dir(outdir, outcome.error) || !write_text(outdir / "validation.json", report.dump(2) + '\n', outcome.error)) {
    outcome.exit_code = kExitIo;
    return outcome;
  }
  outcome.artifacts.push_back("validation.json");
  return outcome;
}

RunOutcome render_report(const fs::path& outdir) {
  RunOutcome outcome;
  json summary;
  try {
    summary = json::parse(read_file(outdir / "summary.json"));
  } catch (const std::exception& e) {
    outcome.exit_code = kExitIo;
    outcome.error = e.what();
    return outcome;
  }
  for (const auto& [name, text] : plot_files(summary)) {
    if (!write_text(outdir / name, text, outcome.error)) {
      outcome.exit_code = kExitIo;
      return outcome;
    }
    outcome.artifacts.push_back(name);
  }
  return outcome;
}

}  // namespace tracerlab
