#pragma once

// Monte Carlo estimators for the retraction bounds, the regeneration-cycle
// statistics and the two Stokes-drift estimators.
//
// Every estimator draws its paths from an Ensemble: path i gets its own noise
// stream (and, for annealed ensembles, its own field realization) derived from
// the master seed, the estimator's stream tag and i.  Per-path work runs through
// parallel_map and is reduced in path order, so results do not depend on the
// worker count.

#include <cstdint>
#include <string>
#include <vector>

#include "tracerlab/field.hpp"
#include "tracerlab/parallel.hpp"
#include "tracerlab/renewal.hpp"
#include "tracerlab/sde.hpp"
#include "tracerlab/stats.hpp"

namespace tracerlab {

enum class Environment { kAnnealed, kQuenched };

std::string to_string(Environment env);
Environment parse_environment(const std::string& name);

enum class StreamTag : std::uint64_t {
  kGamma = 1,
  kBacktrack,
  kMaxMean,
  kHitting,
  kRestart,
  kLln,
  kRenewal,
  kStationarity,
  kAudit,
  kSimulate,
};

struct Ensemble {
  FieldSpec field;
  SimParams sim;
  std::uint64_t master_seed = 1;
  Environment environment = Environment::kAnnealed;
  unsigned workers = default_workers();

  FieldRealization field_for(StreamTag tag, std::size_t path) const;
  NoiseStream stream_for(StreamTag tag, std::size_t path) const;
  Vec origin() const { return Vec::Zero(field.dim); }
};

enum class CheckKind { kUpper, kLower, kMatch };

// kUpper: observed <= reference + tolerance
// kLower: observed >= reference - tolerance
// kMatch: |observed - reference| <= tolerance
struct Check {
  std::string name;
  CheckKind kind = CheckKind::kUpper;
  double observed = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

Check make_check(std::string name, CheckKind kind, double observed, double reference, double tolerance);
std::string to_string(CheckKind kind);

struct VectorEstimate {
  std::string name;
  std::vector<Estimate> components;

  Vec value() const;
  Vec std_error() const;
  bool ok() const;
};

// ---------------------------------------------------------------------------
// Retraction probabilities

struct GammaResult {
  Estimate gamma;  // fraction of decided paths confirmed to never retract
  std::size_t confirmed = 0;
  std::size_t finite = 0;
  std::size_t censored = 0;
  std::vector<Check> checks;
};

// Requires n_paths >= 100.  Checks positivity and the supermartingale lower
// bound 1 - exp(-theta) with theta = min(delta/2, 2 delta/kappa).
GammaResult estimate_gamma(const Ensemble& ens, const CensorPolicy& policy, std::size_t n_paths);

double supermartingale_escape_bound(double drift_floor, double kappa);

struct TailPoint {
  double level = 0.0;
  Estimate probability;  // P[reach -M before +M]
  double bound = 0.0;    // exp(-delta M/4) + exp(-delta M/(4d))
  bool estimable = true;  // bound > 10 / n_paths
  Check check;
};

struct TailCurve {
  std::vector<TailPoint> points;
  std::size_t undecided = 0;
};

TailCurve backtrack_tail(const Ensemble& ens, const std::vector<double>& levels, std::size_t n_paths,
                         double horizon);

struct DyadicMass {
  int exponent = 0;  // bucket [2^m, 2^{m+1})
  Estimate mass;
};

struct MaxMeanResult {
  Estimate truncated_mean;  // E[M_*; D < inf]
  std::size_t finite = 0;
  std::vector<DyadicMass> dyadic;
  std::vector<Check> checks;
};

MaxMeanResult conditional_max_mean(const Ensemble& ens, const CensorPolicy& policy, std::size_t n_paths);

struct HittingResult {
  Estimate ratio;  // mean(U_m) / m
  double level = 0.0;
  std::size_t censored = 0;
  bool ratio_regime = true;  // m >= 10 r0
  std::vector<Check> checks;
};

HittingResult hitting_time_ratio(const Ensemble& ens, double level, std::size_t n_paths, double horizon);

struct RestartResult {
  std::vector<Estimate> survival;  // index k: P[R_k < inf], k = 0..k_max
  std::vector<std::size_t> counts;
  double gamma_lower = 0.0;
  std::vector<Check> checks;
  EstimateStatus status = EstimateStatus::kOk;
  std::string note;
};

inline constexpr std::size_t kMaxRestartLevels = 8;

RestartResult restart_survival(const Ensemble& ens, const CensorPolicy& policy, std::size_t k_max,
                               std::size_t n_paths, double gamma_lower);

// ---------------------------------------------------------------------------
// Stokes drift

// Ensemble mean of x(T) / T.
VectorEstimate stokes_drift_lln(const Ensemble& ens, double horizon, std::size_t n_paths);

struct CycleSample {
  std::size_t path_id = 0;
  std::size_t index = 0;  // 0-based cycle number along its path
  double start_time = 0.0;  // tau_k
  double duration = 0.0;
  Vec displacement;
  double lagrangian_integral = 0.0;  // integral of v-hat . u over the cycle
};

struct CycleCollection {
  std::vector<CycleSample> cycles;
  std::size_t paths_used = 0;
  bool sufficient = false;
};

// Post-burn-in cycles (cycle index >= burn_in) from successive paths of length
// path_horizon, in path order, truncated to n_cycles.
CycleCollection collect_cycles(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in,
                               std::size_t n_cycles, double path_horizon,
                               StreamTag tag = StreamTag::kRenewal, std::size_t max_paths = 100000);

struct DriftReport {
  VectorEstimate v_renewal;
  VectorEstimate w_star;
  Estimate t_star;
  std::size_t burn_in = 0;
  std::size_t n_cycles = 0;
  std::size_t n_paths = 0;
  EstimateStatus status = EstimateStatus::kOk;
  std::string note;
};

DriftReport drift_from_cycles(const CycleCollection& cycles, int dim, std::size_t burn_in);

DriftReport stokes_drift_renewal(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in,
                                 std::size_t n_cycles, double path_horizon);

// Time-weighted Lagrangian mean of v-hat . u minus |v|.
Estimate lagrangian_bias_from_cycles(const CycleCollection& cycles, const FieldSpec& spec);

Estimate lagrangian_bias(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in,
                         std::size_t n_cycles, double path_horizon);

// ---------------------------------------------------------------------------
// Stationarity of cycle statistics

struct StationarityReport {
  KsResult duration;
  KsResult displacement;  // of v-hat . displacement
  double duration_lag1 = 0.0;

  bool pass(double alpha) const { return duration.p_value >= alpha && displacement.p_value >= alpha; }
};

// Compares cycles [b, b + W) with [b + W, b + 2W).  Requires b + 2W cycles.
StationarityReport stationarity_test(const std::vector<Cycle>& cycles, const Vec& direction, std::size_t burn_in,
                                     std::size_t window);

struct StationaritySummary {
  std::vector<StationarityReport> reports;
  std::size_t passes = 0;
  std::size_t incomplete = 0;  // repetitions that could not reach b + 2W cycles
  double alpha = 0.01;
};

// One path per repetition, run until it holds b + 2W complete cycles.
StationaritySummary stationarity_repetitions(const Ensemble& ens, const CensorPolicy& policy, std::size_t burn_in,
                                             std::size_t window, std::size_t repetitions, double alpha = 0.01);

// ---------------------------------------------------------------------------
// Censoring audit

struct AuditResult {
  std::size_t confirmations = 0;
  std::size_t later_retractions = 0;
  std::size_t paths = 0;
  double extended_height = 0.0;
};

// Re-simulates confirmed paths until they climb `extension` past the original
// confirmation height (or retract), and counts retractions.  Stops early after
// 100 paths per requested confirmation.
AuditResult misclassification_audit(const Ensemble& ens, const CensorPolicy& policy, std::size_t confirmations,
                                    double extension);

}  // namespace tracerlab
