#include "tracerlab/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tracerlab {

std::string to_string(Environment env) { return env == Environment::kAnnealed ? "annealed" : "quenched"; }

Environment parse_environment(const std::string& name) {
  if (name == "annealed") return Environment::kAnnealed;
  if (name == "quenched") return Environment::kQuenched;
  throw std::invalid_argument("unknown environment '" + name + "' (expected annealed or quenched)");
}

namespace {

constexpr std::uint64_t kFieldTagBase = 0x1000;
constexpr std::uint64_t kQuenchedFieldTag = 0xF1E1D;

double last_projection(const PathRecord& path) { return path.projection(path.size() - 1); }

SimParams with_horizon(SimParams params, double horizon) {
  params.horizon = horizon;
  return params;
}

}  // namespace

FieldRealization Ensemble::field_for(StreamTag tag, std::size_t path) const {
  if (environment == Environment::kQuenched) return FieldRealization(field, derive_seed(master_seed, kQuenchedFieldTag, 0));
  return FieldRealization(field, derive_seed(master_seed, kFieldTagBase + static_cast<std::uint64_t>(tag), path));
}

NoiseStream Ensemble::stream_for(StreamTag tag, std::size_t path) const {
  if (path > std::numeric_limits<std::uint32_t>::max()) throw std::out_of_range("path index exceeds 32 bits");
  return NoiseStream{derive_seed(master_seed, static_cast<std::uint64_t>(tag), 0), static_cast<std::uint32_t>(path)};
}

std::string to_string(CheckKind kind) {
  switch (kind) {
    case CheckKind::kUpper:
      return "upper";
    case CheckKind::kLower:
      return "lower";
    case CheckKind::kMatch:
      return "match";
  }
  return "unknown";
}

Check make_check(std::string name, CheckKind kind, double observed, double reference, double tolerance) {
  Check c{std::move(name), kind, observed, reference, tolerance, false};
  switch (kind) {
    case CheckKind::kUpper:
      c.pass = observed <= reference + tolerance;
      break;
    case CheckKind::kLower:
      c.pass = observed >= reference - tolerance;
      break;
    case CheckKind::kMatch:
      c.pass = std::abs(observed - reference) <= tolerance;
      break;
  }
  return c;
}

Vec VectorEstimate::value() const {
  Vec v(static_cast<int>(components.size()));
  for (std::size_t j = 0; j < components.size(); ++j) v[static_cast<int>(j)] = components[j].value;
  return v;
}

Vec VectorEstimate::std_error() const {
  Vec v(static_cast<int>(components.size()));
  for (std::size_t j = 0; j < components.size(); ++j) v[static_cast<int>(j)] = components[j].std_error;
  return v;
}

bool VectorEstimate::ok() const {
  return !components.empty() && std::all_of(components.begin(), components.end(), [](const Estimate& e) { return e.ok(); });
}

double supermartingale_escape_bound(double drift_floor, double kappa) {
  // exp(-theta p) is a supermartingale once theta (kappa theta / 2 - delta) <= 0.
  const double theta = std::min(drift_floor / 2.0, 2.0 * drift_floor / kappa);
  return 1.0 - std::exp(-theta);
}

namespace {

struct RetractionSample {
  RetractionStatus status = RetractionStatus::kCensored;
  double max_excursion = 0.0;
};

// Runs one path from the origin until D is decided (or the policy horizon).
RetractionSample sample_retraction(const Ensemble& ens, const CensorPolicy& policy, StreamTag tag, std::size_t i,
                                   bool want_max) {
  const FieldRealization field = ens.field_for(tag, i);
  const Vec x0 = ens.origin();
  const double p0 = ens.field.direction().dot(x0);
  const double floor_level = p0 - 1.0;
  const double confirm_level = p0 + policy.confirm_height;
  auto stop = [&](const PathRecord& r) {
    const double p = last_projection(r);
    return p <= floor_level || p >= confirm_level;
  };
  const SimOutcome sim = simulate(field, with_horizon(ens.sim, policy.horizon), x0, stop, ens.stream_for(tag, i),
                                  NoiseStorage::kDiscard);
  const RetractionOutcome out = detect_retraction(sim.path, sim.path.projection(0), policy);
  RetractionSample s{out.status, 0.0};
  if (want_max && out.status == RetractionStatus::kFinite) {
    s.max_excursion = running_max(sim.path, 0, out.index) - sim.path.projection(0);
  }
  return s;
}

}  // namespace

GammaResult estimate_gamma(const Ensemble& ens, const CensorPolicy& policy, std::size_t n_paths) {
  policy.validate();
  GammaResult result;
  if (n_paths < 100) {
    result.gamma = Estimate::inconclusive("gamma", n_paths, "at least 100 paths required");
    return result;
  }
  const auto samples = parallel_map(n_paths, ens.workers, [&](std::size_t i) {
    return sample_retraction(ens, policy, StreamTag::kGamma, i, false).status;
  });
  for (const RetractionStatus s : samples) {
    switch (s) {
      case RetractionStatus::kConfirmedInfinite:
        ++result.confirmed;
        break;
      case RetractionStatus::kFinite:
        ++result.finite;
        break;
      case RetractionStatus::kCensored:
        ++result.censored;
        break;
    }
  }
  const std::size_t decided = result.confirmed + result.finite;
  if (decided == 0) {
    result.gamma = Estimate::inconclusive("gamma", 0, "every path was censored");
    return result;
  }
  result.gamma = proportion("gamma", result.confirmed, decided);
  const double se = result.gamma.std_error;
  result.checks.push_back(make_check("gamma_positive", CheckKind::kLower, result.gamma.value,
                                     std::numeric_limits<double>::min(), 0.0));
  result.checks.push_back(make_check("gamma_supermartingale_lower", CheckKind::kLower, result.gamma.value,
                                     supermartingale_escape_bound(ens.field.drift_floor(), ens.sim.kappa), 3.0 * se));
  return result;
}

TailCurve backtrack_tail(const Ensemble& ens, const std::vector<double>& levels, std::size_t n_paths,
                         double horizon) {
  if (levels.empty()) throw std::invalid_argument("backtrack_tail: no levels");
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (!(levels[j] > 0.0) || (j > 0 && !(levels[j] > levels[j - 1]))) {
      throw std::invalid_argument("backtrack_tail: levels must be positive and strictly increasing");
    }
  }
  const double top = levels.back();
  const double delta = ens.field.drift_floor();
  const int dim = ens.field.dim;

  // Per path and level: 1 = backtracked, 0 = reached +M first, -1 = undecided.
  const auto outcomes = parallel_map(n_paths, ens.workers, [&](std::size_t i) {
    const FieldRealization field = ens.field_for(StreamTag::kBacktrack, i);
    const Vec x0 = ens.origin();
    const double p0 = ens.field.direction().dot(x0);
    auto stop = [&](const PathRecord& r) {
      const double p = last_projection(r);
      return p >= p0 + top || p <= p0 - top;
    };
    const SimOutcome sim = simulate(field, with_horizon(ens.sim, horizon), x0, stop,
                                    ens.stream_for(StreamTag::kBacktrack, i), NoiseStorage::kDiscard);
    std::vector<int> flags;
    flags.reserve(levels.size());
    for (const double m : levels) {
      const auto down = first_passage(sim.path, p0 - m, Direction::kDown);
      const auto up = first_passage(sim.path, p0 + m, Direction::kUp);
      if (!down && !up) {
        flags.push_back(-1);
      } else {
        flags.push_back(down && (!up || *down <= *up) ? 1 : 0);
      }
    }
    return flags;
  });

  TailCurve curve;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    std::size_t hits = 0;
    std::size_t decided = 0;
    for (const auto& f : outcomes) {
      if (f[j] < 0) continue;
      ++decided;
      hits += static_cast<std::size_t>(f[j]);
    }
    curve.undecided = std::max(curve.undecided, n_paths - decided);
    TailPoint pt;
    pt.level = levels[j];
    pt.bound = retraction_tail_bound(delta, dim, levels[j]);
    pt.estimable = pt.bound > 10.0 / static_cast<double>(n_paths);
    pt.probability = proportion("backtrack_M" + std::to_string(static_cast<int>(levels[j])), hits, decided);
    if (!pt.estimable) {
      pt.probability.status = EstimateStatus::kInconclusive;
      pt.probability.note = "bound below 10 / n_paths";
    }
    pt.check = make_check("backtrack_tail_bound", CheckKind::kUpper, pt.probability.value, pt.bound,
                          3.0 * pt.probability.std_error);
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

MaxMeanResult conditional_max_mean(const Ensemble& ens, const CensorPolicy& policy, std::size_t n_paths) {
  policy.validate();
  const auto samples = parallel_map(n_paths, ens.workers, [&](std::size_t i) {
    return sample_retraction(ens, policy, StreamTag::kMaxMean, i, true);
  });
  MaxMeanResult result;
  std::vector<double> truncated;
  truncated.reserve(n_paths);
  int top_exponent = -1;
  for (const auto& s : samples) {
    const bool finite = s.status == RetractionStatus::kFinite;
    result.finite += finite ? 1 : 0;
    truncated.push_back(finite ? s.max_excursion : 0.0);
    if (finite && s.max_excursion >= 1.0) {
      top_exponent = std::max(top_exponent, static_cast<int>(std::floor(std::log2(s.max_excursion))));
    }
  }
  if (result.finite < 50) {
    result.truncated_mean = Estimate::inconclusive("max_mean", n_paths, "fewer than 50 paths with finite D");
    return result;
  }
  result.truncated_mean = sample_mean("max_mean", truncated);

  for (int m = 0; m <= top_exponent; ++m) {
    const double lo = std::ldexp(1.0, m);
    const double hi = std::ldexp(1.0, m + 1);
    std::size_t count = 0;
    for (const auto& s : samples) {
      if (s.status == RetractionStatus::kFinite && s.max_excursion >= lo && s.max_excursion < hi) ++count;
    }
    result.dyadic.push_back({m, proportion("dyadic_mass_" + std::to_string(m), count, n_paths)});
  }
  bool decreasing = true;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j + 1 < result.dyadic.size(); ++j) {
    const Estimate& a = result.dyadic[j].mass;
    const Estimate& b = result.dyadic[j + 1].mass;
    const double excess = (b.value - a.value) - 3.0 * combined_se(a.std_error, b.std_error);
    worst = std::max(worst, excess);
    decreasing = decreasing && excess <= 0.0;
  }
  Check c = make_check("dyadic_mass_decreasing", CheckKind::kUpper, std::isfinite(worst) ? worst : 0.0, 0.0, 0.0);
  c.pass = decreasing;
  result.checks.push_back(c);
  return result;
}

HittingResult hitting_time_ratio(const Ensemble& ens, double level, std::size_t n_paths, double horizon) {
  if (!(level > 0.0)) throw std::invalid_argument("hitting_time_ratio: level must be > 0");
  HittingResult result;
  result.level = level;
  result.ratio_regime = level >= 10.0 * ens.field.dependence_range();
  const auto samples = parallel_map(n_paths, ens.workers, [&](std::size_t i) {
    const FieldRealization field = ens.field_for(StreamTag::kHitting, i);
    const Vec x0 = ens.origin();
    const double target = ens.field.direction().dot(x0) + level;
    auto stop = [&](const PathRecord& r) { return last_projection(r) >= target; };
    const SimOutcome sim = simulate(field, with_horizon(ens.sim, horizon), x0, stop,
                                    ens.stream_for(StreamTag::kHitting, i), NoiseStorage::kDiscard);
    const auto hit = first_passage(sim.path, target, Direction::kUp);
    return hit ? std::make_pair(sim.path.time(*hit), false) : std::make_pair(horizon, true);
  });
  std::vector<double> ratios;
  ratios.reserve(n_paths);
  for (const auto& [t, censored] : samples) {
    ratios.push_back(t / level);
    result.censored += censored ? 1 : 0;
  }
  result.ratio = sample_mean("hitting_ratio", ratios);
  if (result.censored > 0) result.ratio.note = "censored passages counted at the horizon";
  if (!result.ratio_regime) {
    result.ratio.note += result.ratio.note.empty() ? "" : "; ";
    result.ratio.note += "level below 10 r0";
  }
  result.checks.push_back(make_check("hitting_ratio_bound", CheckKind::kUpper, result.ratio.value,
                                     1.0 / ens.field.drift_floor(), 3.0 * result.ratio.std_error));
  return result;
}

RestartResult restart_survival(const Ensemble& ens, const CensorPolicy& policy, std::size_t k_max,
                               std::size_t n_paths, double gamma_lower) {
  policy.validate();
  RestartResult result;
  result.gamma_lower = gamma_lower;
  if (k_max == 0 || k_max > kMaxRestartLevels) {
    result.status = EstimateStatus::kInconclusive;
    result.note = "k_max must lie in [1, " + std::to_string(kMaxRestartLevels) + "]";
    return result;
  }
  if (n_paths == 0) {
    result.status = EstimateStatus::kInconclusive;
    result.note = "no paths";
    return result;
  }
  const double r0 = ens.field.dependence_range();
  const double speed = ens.field.speed();
  const auto finite_counts = parallel_map(n_paths, ens.workers, [&](std::size_t i) {
    const FieldRealization field = ens.field_for(StreamTag::kRestart, i);
    double horizon = std::min(policy.horizon, 2.0 * (r0 + 2.0 + policy.confirm_height) / speed);
    SimOutcome sim = simulate(field, with_horizon(ens.sim, horizon), ens.origin(), never_stop,
                              ens.stream_for(StreamTag::kRestart, i), NoiseStorage::kDiscard);
    while (true) {
      const LadderRecord ladder = detect_ladder(sim.path, r0, policy, 0, k_max);
      const std::size_t finite = ladder.finite_retractions();
      if (ladder.confirmed() || finite >= k_max || horizon >= policy.horizon) return finite;
      horizon = std::min(policy.horizon, 2.0 * horizon);
      extend(sim.path, field, with_horizon(ens.sim, horizon), never_stop);
    }
  });

  result.counts.assign(k_max + 1, 0);
  for (const std::size_t f : finite_counts) {
    for (std::size_t k = 0; k <= std::min(f, k_max); ++k) ++result.counts[k];
  }
  for (std::size_t k = 0; k <= k_max; ++k) {
    result.survival.push_back(proportion("restart_k" + std::to_string(k), result.counts[k], n_paths));
  }
  const double q = 1.0 - gamma_lower;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const Estimate& e = result.survival[k];
    result.checks.push_back(make_check("restart_k" + std::to_string(k) + "_bound", CheckKind::kUpper, e.value,
                                       std::pow(q, static_cast<double>(k)), 3.0 * e.std_error));
  }
  // Nested events: P[R_k < inf] <= (1 - gamma) P[R_{k-1} < inf].
  for (std::size_t k = 1; k <= k_max; ++k) {
    const std::size_t prev = result.counts[k - 1];
    if (prev == 0) continue;
    const double r = static_cast<double>(result.counts[k]) / static_cast<double>(prev);
    const double se = std::sqrt(r * (1.0 - r) / static_cast<double>(prev));
    result.checks.push_back(make_check("restart_k" + std::to_string(k) + "_step", CheckKind::kUpper, r, q, 3.0 * se));
  }
  return result;
}

VectorEstimate stokes_drift_lln(const Ensemble& ens, double horizon, std::size_t n_paths) {
  const int d = ens.field.dim;
  const auto endpoints = parallel_map(n_paths, ens.workers, [&](std::size_t i) {
    const FieldRealization field = ens.field_for(StreamTag::kLln, i);
    const SimOutcome sim = simulate(field, with_horizon(ens.sim, horizon), ens.origin(), never_stop,
                                    ens.stream_for(StreamTag::kLln, i), NoiseStorage::kDiscard);
    const std::size_t last = sim.path.size() - 1;
    return Vec((sim.path.position(last) - sim.path.position(0)) / sim.path.time(last));
  });
  VectorEstimate out;
  out.name = "v_lln";
  for (int j = 0; j < d; ++j) {
    std::vector<double> xs;
    xs.reserve(n_paths);
    for (const Vec& v : endpoints) xs.push_back(v[j]);
    out.components.push_back(sample_mean("v_lln_" + std::to_string(j), xs));
  }
  return out;
}

CycleCollection collect_cycles(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in,
                               std::size_t n_cycles, double path_horizon, StreamTag tag, std::size_t max_paths) {
  policy.validate();
  constexpr std::size_t kBatch = 8;
  const double r0 = ens.field.dependence_range();
  const Vec dir = ens.field.direction();
  CensorPolicy local = policy;
  local.horizon = path_horizon;

  CycleCollection out;
  std::size_t next = 0;
  while (out.cycles.size() < n_cycles && next < max_paths) {
    const std::size_t batch = std::min(kBatch, max_paths - next);
    auto per_path = parallel_map(batch, ens.workers, [&](std::size_t b) {
      const std::size_t id = next + b;
      const FieldRealization field = ens.field_for(tag, id);
      const SimOutcome sim = simulate(field, with_horizon(ens.sim, path_horizon), ens.origin(), never_stop,
                                      ens.stream_for(tag, id), NoiseStorage::kDiscard);
      const RenewalDecomposition decomp = extract_regenerations(sim.path, r0, local);
      const std::vector<CycleFunctional> lagrangian{{[&dir](const Vec& u) { return dir.dot(u); }, 0.0}};
      const auto increments = cycle_increments(decomp, sim.path, field, lagrangian);
      std::vector<CycleSample> samples;
      for (std::size_t k = burn_in; k < increments.size(); ++k) {
        samples.push_back({id, k, sim.path.time(decomp.cycles[k].start), increments[k].duration,
                           increments[k].displacement, increments[k].xi});
      }
      return samples;
    });
    for (auto& samples : per_path) {
      ++out.paths_used;
      for (auto& s : samples) {
        if (out.cycles.size() == n_cycles) break;
        out.cycles.push_back(std::move(s));
      }
      if (out.cycles.size() == n_cycles) break;
    }
    next += batch;
  }
  out.sufficient = out.cycles.size() >= n_cycles;
  return out;
}

DriftReport drift_from_cycles(const CycleCollection& cycles, int dim, std::size_t burn_in) {
  DriftReport report;
  report.burn_in = burn_in;
  report.n_cycles = cycles.cycles.size();
  report.n_paths = cycles.paths_used;
  report.v_renewal.name = "v_renewal";
  report.w_star.name = "w_star";
  if (cycles.cycles.size() < 100 || !cycles.sufficient) {
    report.status = EstimateStatus::kInconclusive;
    report.note = "fewer complete post-burn-in cycles than requested (minimum 100)";
    report.t_star = Estimate::inconclusive("t_star", cycles.cycles.size(), report.note);
    for (int j = 0; j < dim; ++j) {
      report.v_renewal.components.push_back(Estimate::inconclusive("v_renewal_" + std::to_string(j),
                                                                   cycles.cycles.size(), report.note));
      report.w_star.components.push_back(Estimate::inconclusive("w_star_" + std::to_string(j),
                                                                cycles.cycles.size(), report.note));
    }
    return report;
  }
  std::vector<double> durations;
  durations.reserve(cycles.cycles.size());
  for (const auto& c : cycles.cycles) durations.push_back(c.duration);
  report.t_star = batch_mean("t_star", durations);
  for (int j = 0; j < dim; ++j) {
    std::vector<double> disp;
    disp.reserve(cycles.cycles.size());
    for (const auto& c : cycles.cycles) disp.push_back(c.displacement[j]);
    report.v_renewal.components.push_back(batch_ratio("v_renewal_" + std::to_string(j), disp, durations));
    report.w_star.components.push_back(batch_mean("w_star_" + std::to_string(j), disp));
  }
  return report;
}

DriftReport stokes_drift_renewal(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in,
                                 std::size_t n_cycles, double path_horizon) {
  if (burn_in < 1) throw std::invalid_argument("stokes_drift_renewal: burn-in must be >= 1");
  const CycleCollection cycles = collect_cycles(ens, policy, burn_in, n_cycles, path_horizon);
  return drift_from_cycles(cycles, ens.field.dim, burn_in);
}

Estimate lagrangian_bias_from_cycles(const CycleCollection& cycles, const FieldSpec& spec) {
  if (cycles.cycles.size() < 100 || !cycles.sufficient) {
    return Estimate::inconclusive("lagrangian_bias", cycles.cycles.size(), "insufficient cycles");
  }
  const double eulerian = spec.speed();  // v-hat . v
  std::vector<double> excess;
  std::vector<double> durations;
  for (const auto& c : cycles.cycles) {
    excess.push_back(c.lagrangian_integral - eulerian * c.duration);
    durations.push_back(c.duration);
  }
  return batch_ratio("lagrangian_bias", excess, durations);
}

Estimate lagrangian_bias(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in, std::size_t n_cycles,
                         double path_horizon) {
  const CycleCollection cycles = collect_cycles(ens, policy, burn_in, n_cycles, path_horizon);
  return lagrangian_bias_from_cycles(cycles, ens.field);
}

StationarityReport stationarity_test(const std::vector<Cycle>& cycles, const Vec& direction, std::size_t burn_in,
                                     std::size_t window) {
  if (window == 0 || cycles.size() < burn_in + 2 * window) {
    throw std::invalid_argument("stationarity_test: need burn_in + 2 * window complete cycles");
  }
  std::vector<double> dur_a, dur_b, disp_a, disp_b, durations;
  for (std::size_t k = burn_in; k < burn_in + 2 * window; ++k) {
    const bool first = k < burn_in + window;
    const double dur = cycles[k].duration;
    const double disp = direction.dot(cycles[k].displacement);
    (first ? dur_a : dur_b).push_back(dur);
    (first ? disp_a : disp_b).push_back(disp);
    durations.push_back(dur);
  }
  StationarityReport report;
  report.duration = ks_two_sample(dur_a, dur_b);
  report.displacement = ks_two_sample(disp_a, disp_b);
  report.duration_lag1 = lag1_autocorrelation(durations);
  return report;
}

StationaritySummary stationarity_repetitions(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in,
                                             std::size_t window, std::size_t repetitions, double alpha) {
  policy.validate();
  const double r0 = ens.field.dependence_range();
  const double delta = ens.field.drift_floor();
  const std::size_t needed = burn_in + 2 * window;
  const Vec dir = ens.field.direction();

  const auto reports = parallel_map(repetitions, ens.workers, [&](std::size_t i) -> std::optional<StationarityReport> {
    const FieldRealization field = ens.field_for(StreamTag::kStationarity, i);
    double horizon = std::min(policy.horizon,
                              (static_cast<double>(needed) + 2.0) * (r0 + 2.0) / delta + 2.0 * policy.confirm_height / delta);
    SimOutcome sim = simulate(field, with_horizon(ens.sim, horizon), ens.origin(), never_stop,
                              ens.stream_for(StreamTag::kStationarity, i), NoiseStorage::kDiscard);
    while (true) {
      CensorPolicy local = policy;
      local.horizon = horizon;
      const RenewalDecomposition decomp = extract_regenerations(sim.path, r0, local);
      if (decomp.cycles.size() >= needed) return stationarity_test(decomp.cycles, dir, burn_in, window);
      if (horizon >= policy.horizon) return std::nullopt;
      horizon = std::min(policy.horizon, 2.0 * horizon);
      extend(sim.path, field, with_horizon(ens.sim, horizon), never_stop);
    }
  });

  StationaritySummary summary;
  summary.alpha = alpha;
  for (const auto& r : reports) {
    if (!r) {
      ++summary.incomplete;
      continue;
    }
    summary.passes += r->pass(alpha) ? 1 : 0;
    summary.reports.push_back(*r);
  }
  return summary;
}

AuditResult misclassification_audit(const Ensemble& ens, const CensorPolicy& policy, std::size_t confirmations,
                                    double extension) {
  policy.validate();
  constexpr std::size_t kBatch = 64;
  CensorPolicy extended = policy;
  extended.confirm_height = policy.confirm_height + extension;

  AuditResult result;
  result.extended_height = extended.confirm_height;
  // Gives up once 100 paths per requested confirmation have failed to deliver.
  const std::size_t max_paths = 100 * confirmations + kBatch;
  std::size_t next = 0;
  while (result.confirmations < confirmations && next < max_paths) {
    // 0 = not confirmed, 1 = confirmed and held, 2 = confirmed then retracted
    const auto outcomes = parallel_map(kBatch, ens.workers, [&](std::size_t b) {
      const std::size_t id = next + b;
      const FieldRealization field = ens.field_for(StreamTag::kAudit, id);
      const Vec x0 = ens.origin();
      const double p0 = ens.field.direction().dot(x0);
      const SimParams params = with_horizon(ens.sim, policy.horizon);
      auto stop_at = [&](double height) {
        return [p0, height](const PathRecord& r) {
          const double p = last_projection(r);
          return p <= p0 - 1.0 || p >= p0 + height;
        };
      };
      SimOutcome sim = simulate(field, params, x0, stop_at(policy.confirm_height), ens.stream_for(StreamTag::kAudit, id),
                                NoiseStorage::kDiscard);
      if (detect_retraction(sim.path, p0, policy).status != RetractionStatus::kConfirmedInfinite) return 0;
      extend(sim.path, field, params, stop_at(extended.confirm_height));
      return detect_retraction(sim.path, p0, extended).status == RetractionStatus::kFinite ? 2 : 1;
    });
    for (const int o : outcomes) {
      if (result.confirmations == confirmations) break;
      ++result.paths;
      if (o == 0) continue;
      ++result.confirmations;
      result.later_retractions += o == 2 ? 1 : 0;
    }
    next += kBatch;
  }
  return result;
}

}  // namespace tracerlab
