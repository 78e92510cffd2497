#include "tracerlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace tracerlab {

bool OutputSpec::wants(std::string_view format) const {
  return std::find(formats.begin(), formats.end(), format) != formats.end();
}

CensorPolicy RunConfig::policy() const {
  if (censor.confirm_height) return CensorPolicy{*censor.confirm_height, censor.horizon, censor.budget};
  return CensorPolicy::from_budget(field.drift_floor(), field.dim, censor.budget, censor.horizon);
}

Ensemble RunConfig::ensemble(unsigned workers) const {
  return Ensemble{field, sim, master_seed, environment, workers};
}

bool RunConfig::selected(std::string_view estimator) const {
  const auto& s = estimators.selected;
  return std::find(s.begin(), s.end(), estimator) != s.end();
}

std::string ParseResult::message() const {
  std::ostringstream out;
  for (const auto& e : errors) out << e.key << ": " << e.reason << '\n';
  return out.str();
}

namespace {

using Reason = std::optional<std::string>;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::optional<double> to_double(std::string_view s) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> to_uint(std::string_view s) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<bool> to_bool(std::string_view s) {
  const std::string t = trim(s);
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  return std::nullopt;
}

std::optional<std::vector<double>> to_doubles(std::string_view s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    const auto v = to_double(item);
    if (!v) return std::nullopt;
    out.push_back(*v);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

std::string join(const std::vector<double>& items) {
  std::vector<std::string> s;
  for (const double v : items) s.push_back(format_double(v));
  return join(s);
}

struct KeySpec {
  std::string name;
  std::function<Reason(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Access>
KeySpec real_key(std::string name, Access access) {
  return {std::move(name),
          [access](RunConfig& c, std::string_view v) -> Reason {
            const auto d = to_double(v);
            if (!d) return "expected a number, got '" + std::string(v) + "'";
            access(c) = *d;
            return std::nullopt;
          },
          [access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
KeySpec count_key(std::string name, Access access) {
  return {std::move(name),
          [access](RunConfig& c, std::string_view v) -> Reason {
            const auto d = to_uint(v);
            if (!d) return "expected a nonnegative integer, got '" + std::string(v) + "'";
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(*d);
            return std::nullopt;
          },
          [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); }};
}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = [] {
    std::vector<KeySpec> t;
    // [field]
    t.push_back({"field.dim",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   const auto d = to_uint(v);
                   if (!d) return "expected a positive integer, got '" + std::string(v) + "'";
                   c.field.dim = static_cast<int>(std::min<std::uint64_t>(*d, 1000));
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return std::to_string(c.field.dim); }});
    t.push_back({"field.mean_velocity",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   const auto xs = to_doubles(v);
                   if (!xs || xs->empty() || xs->size() > static_cast<std::size_t>(kMaxDim)) {
                     return "expected 1 to " + std::to_string(kMaxDim) + " comma-separated numbers";
                   }
                   c.field.mean_velocity = Vec::Map(xs->data(), static_cast<Eigen::Index>(xs->size()));
                   return std::nullopt;
                 },
                 [](const RunConfig& c) {
                   return join(std::vector<double>(c.field.mean_velocity.data(),
                                                   c.field.mean_velocity.data() + c.field.mean_velocity.size()));
                 }});
    t.push_back(real_key("field.alpha", [](RunConfig& c) -> double& { return c.field.bump_amplitude_cap; }));
    t.push_back(real_key("field.rho", [](RunConfig& c) -> double& { return c.field.bump_radius; }));
    t.push_back(real_key("field.cell_side", [](RunConfig& c) -> double& { return c.field.cell_side; }));
    t.push_back({"field.profile",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   try {
                     c.field.profile = parse_profile(trim(v));
                   } catch (const std::exception& e) {
                     return std::string(e.what());
                   }
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return to_string(c.field.profile); }});
    // [sim]
    t.push_back(real_key("sim.step", [](RunConfig& c) -> double& { return c.sim.step; }));
    t.push_back(real_key("sim.kappa", [](RunConfig& c) -> double& { return c.sim.kappa; }));
    t.push_back(real_key("sim.horizon", [](RunConfig& c) -> double& { return c.sim.horizon; }));
    t.push_back({"sim.bridge_correction",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   const auto b = to_bool(v);
                   if (!b) return "expected true or false, got '" + std::string(v) + "'";
                   c.sim.bridge_correction = *b;
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return std::string(c.sim.bridge_correction ? "true" : "false"); }});
    t.push_back({"sim.environment",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   try {
                     c.environment = parse_environment(trim(v));
                   } catch (const std::exception& e) {
                     return std::string(e.what());
                   }
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return to_string(c.environment); }});
    t.push_back(count_key("sim.master_seed", [](RunConfig& c) -> std::uint64_t& { return c.master_seed; }));
    // [censor]
    t.push_back(real_key("censor.budget", [](RunConfig& c) -> double& { return c.censor.budget; }));
    t.push_back({"censor.confirm_height",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   if (trim(v) == "auto") {
                     c.censor.confirm_height.reset();
                     return std::nullopt;
                   }
                   const auto d = to_double(v);
                   if (!d) return "expected a number or 'auto', got '" + std::string(v) + "'";
                   c.censor.confirm_height = *d;
                   return std::nullopt;
                 },
                 [](const RunConfig& c) {
                   return c.censor.confirm_height ? format_double(*c.censor.confirm_height) : std::string("auto");
                 }});
    t.push_back(real_key("censor.horizon", [](RunConfig& c) -> double& { return c.censor.horizon; }));
    // [estimators]
    t.push_back({"estimators.select",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   auto names = split_list(v);
                   if (names.size() == 1 && names[0] == "all") names = known_estimators();
                   for (const auto& n : names) {
                     const auto& known = known_estimators();
                     if (std::find(known.begin(), known.end(), n) == known.end()) {
                       return "unknown estimator '" + n + "'";
                     }
                   }
                   c.estimators.selected = std::move(names);
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return join(c.estimators.selected); }});
    auto& e = t;
    e.push_back(count_key("estimators.gamma.n_paths", [](RunConfig& c) -> std::size_t& { return c.estimators.gamma_paths; }));
    e.push_back(count_key("estimators.backtrack.n_paths",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.backtrack_paths; }));
    e.push_back({"estimators.backtrack.levels",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   const auto xs = to_doubles(v);
                   if (!xs || xs->empty()) return "expected comma-separated numbers";
                   c.estimators.backtrack_levels = *xs;
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return join(c.estimators.backtrack_levels); }});
    e.push_back(count_key("estimators.max_mean.n_paths",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.max_mean_paths; }));
    e.push_back(count_key("estimators.hitting.n_paths",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.hitting_paths; }));
    e.push_back(real_key("estimators.hitting.level", [](RunConfig& c) -> double& { return c.estimators.hitting_level; }));
    e.push_back(count_key("estimators.restart.n_paths",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.restart_paths; }));
    e.push_back(count_key("estimators.restart.k_max", [](RunConfig& c) -> std::size_t& { return c.estimators.restart_k_max; }));
    e.push_back(count_key("estimators.lln.n_paths", [](RunConfig& c) -> std::size_t& { return c.estimators.lln_paths; }));
    e.push_back(real_key("estimators.lln.horizon", [](RunConfig& c) -> double& { return c.estimators.lln_horizon; }));
    e.push_back(count_key("estimators.renewal.burn_in",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.renewal_burn_in; }));
    e.push_back(count_key("estimators.renewal.n_cycles",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.renewal_cycles; }));
    e.push_back(real_key("estimators.renewal.path_horizon",
                         [](RunConfig& c) -> double& { return c.estimators.renewal_path_horizon; }));
    e.push_back(count_key("estimators.renewal.compare_burn_in",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.renewal_compare_burn_in; }));
    e.push_back(count_key("estimators.stationarity.repetitions",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.stationarity_repetitions; }));
    e.push_back(count_key("estimators.stationarity.burn_in",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.stationarity_burn_in; }));
    e.push_back(count_key("estimators.stationarity.window",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.stationarity_window; }));
    e.push_back(real_key("estimators.stationarity.alpha",
                         [](RunConfig& c) -> double& { return c.estimators.stationarity_alpha; }));
    e.push_back(real_key("estimators.stationarity.min_pass_fraction",
                         [](RunConfig& c) -> double& { return c.estimators.stationarity_min_pass; }));
    e.push_back(count_key("estimators.audit.confirmations",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.audit_confirmations; }));
    e.push_back(count_key("estimators.validate.n_points",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.validate_points; }));
    e.push_back(count_key("estimators.validate.gradient_points",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.validate_gradient_points; }));
    e.push_back(count_key("estimators.simulate.n_paths",
                          [](RunConfig& c) -> std::size_t& { return c.estimators.simulate_paths; }));
    // [output]
    t.push_back({"output.dir",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   const auto s = trim(v);
                   if (s.empty()) return "output directory must not be empty";
                   c.output.dir = s;
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return c.output.dir; }});
    t.push_back({"output.formats",
                 [](RunConfig& c, std::string_view v) -> Reason {
                   auto names = split_list(v);
                   for (const auto& n : names) {
                     if (n != "csv" && n != "json" && n != "dat") return "unknown output format '" + n + "'";
                   }
                   c.output.formats = std::move(names);
                   return std::nullopt;
                 },
                 [](const RunConfig& c) { return join(c.output.formats); }});
    return t;
  }();
  return table;
}

const KeySpec* find_key(const std::string& name) {
  for (const auto& k : key_table()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void check_invariants(const RunConfig& c, std::vector<ConfigError>& errors) {
  auto fail = [&](std::string key, std::string reason) { errors.push_back({std::move(key), std::move(reason)}); };
  const FieldSpec& f = c.field;
  if (f.dim < 1 || f.dim > kMaxDim) {
    fail("field.dim", "dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    return;
  }
  if (f.mean_velocity.size() != f.dim) {
    fail("field.mean_velocity", "needs exactly " + std::to_string(f.dim) + " components");
    return;
  }
  if (!f.mean_velocity.allFinite() || !(f.speed() > 0.0)) fail("field.mean_velocity", "must be finite and nonzero");
  if (!std::isfinite(f.bump_amplitude_cap) || f.bump_amplitude_cap < 0.0) {
    fail("field.alpha", "must be finite and >= 0");
  } else if (!(f.bump_amplitude_cap < f.speed())) {
    fail("field.alpha", "condition (A) violated: alpha must be strictly below |v| = " + format_double(f.speed()));
  }
  if (!std::isfinite(f.bump_radius) || !(f.bump_radius > 0.0)) fail("field.rho", "must be finite and > 0");
  if (!std::isfinite(f.cell_side) || !(f.cell_side >= 2.0 * f.bump_radius)) {
    fail("field.cell_side", "condition (DR) violated: cell side must be at least 2 rho = " +
                                format_double(2.0 * f.bump_radius));
  }
  if (!std::isfinite(c.sim.step) || !(c.sim.step > 0.0)) fail("sim.step", "must be finite and > 0");
  if (!std::isfinite(c.sim.kappa) || !(c.sim.kappa > 0.0)) fail("sim.kappa", "must be finite and > 0");
  if (!std::isfinite(c.sim.horizon) || !(c.sim.horizon >= c.sim.step)) fail("sim.horizon", "must be >= sim.step");
  if (!(c.censor.budget > 0.0 && c.censor.budget < 1.0)) fail("censor.budget", "must lie in (0, 1)");
  if (c.censor.confirm_height && !(*c.censor.confirm_height >= 0.0 && std::isfinite(*c.censor.confirm_height))) {
    fail("censor.confirm_height", "must be finite and >= 0");
  }
  if (!std::isfinite(c.censor.horizon) || !(c.censor.horizon >= c.sim.step)) {
    fail("censor.horizon", "must be >= sim.step");
  }
  const auto& e = c.estimators;
  const auto& levels = e.backtrack_levels;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (!(levels[j] > 0.0) || (j > 0 && !(levels[j] > levels[j - 1]))) {
      fail("estimators.backtrack.levels", "levels must be positive and strictly increasing");
      break;
    }
  }
  if (e.hitting_level < 0.0) fail("estimators.hitting.level", "must be >= 0 (0 selects 10 r0)");
  if (!(e.lln_horizon > 0.0)) fail("estimators.lln.horizon", "must be > 0");
  if (e.renewal_burn_in < 1) fail("estimators.renewal.burn_in", "must be >= 1");
  if (!(e.renewal_path_horizon > 0.0)) fail("estimators.renewal.path_horizon", "must be > 0");
  if (e.stationarity_window < 1) fail("estimators.stationarity.window", "must be >= 1");
  if (!(e.stationarity_alpha > 0.0 && e.stationarity_alpha < 1.0)) {
    fail("estimators.stationarity.alpha", "must lie in (0, 1)");
  }
  if (!(e.stationarity_min_pass >= 0.0 && e.stationarity_min_pass <= 1.0)) {
    fail("estimators.stationarity.min_pass_fraction", "must lie in [0, 1]");
  }
}

}  // namespace

ParseResult parse_config(std::string_view text, const std::vector<KeyOverride>& overrides) {
  ParseResult result;
  RunConfig config;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;

  auto assign = [&](const std::string& key, std::string_view value, const std::string& where) {
    const KeySpec* spec = find_key(key);
    if (spec == nullptr) {
      result.errors.push_back({key, "unknown key" + where});
      return;
    }
    if (auto reason = spec->set(config, value)) result.errors.push_back({key, *reason + where});
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const std::string where = " (line " + std::to_string(line_no) + ")";
    if (line.front() == '[') {
      if (line.back() != ']') {
        result.errors.push_back({line, "malformed section header" + where});
        continue;
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      static const std::set<std::string> sections{"field", "sim", "censor", "estimators", "output"};
      if (!sections.count(section)) result.errors.push_back({section, "unknown section" + where});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      result.errors.push_back({line, "expected key = value" + where});
      continue;
    }
    const std::string key = (section.empty() ? "" : section + ".") + trim(std::string_view(line).substr(0, eq));
    if (!seen.insert(key).second) {
      result.errors.push_back({key, "duplicate key" + where});
      continue;
    }
    assign(key, std::string_view(line).substr(eq + 1), where);
  }
  for (const auto& [key, value] : overrides) assign(key, value, " (override)");

  if (result.errors.empty()) check_invariants(config, result.errors);
  if (result.errors.empty()) result.config = std::move(config);
  return result;
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : key_table()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    out << k.name.substr(dot + 1) << " = " << k.get(config) << '\n';
  }
  return out.str();
}

}  // namespace tracerlab
