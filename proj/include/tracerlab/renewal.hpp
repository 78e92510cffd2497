#pragma once

// Detection of the retraction ladder and nonretraction times on discretized
// paths.
//
// All times are grid indices into a PathRecord; a crossing is reported at the
// first grid point at or after it.  With the bridge correction enabled a
// crossing inside a grid interval is detected through the interval's sampled
// bridge extreme, so levels skipped between grid points are not missed.
//
// The event "never retract by 1" cannot be observed in finite time.  A
// CensorPolicy declares it once the path climbs confirm_height above the start
// without retracting; the probability of a later retraction is bounded by
// exp(-delta h / 4) + exp(-delta h / (4 d)).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tracerlab/field.hpp"
#include "tracerlab/sde.hpp"

namespace tracerlab {

// exp(-delta M / 4) + exp(-delta M / (4 d))
double retraction_tail_bound(double drift_floor, int dim, double level);

// Smallest confirmation height whose tail bound is at most `budget`.
double confirm_height_for_budget(double drift_floor, int dim, double budget);

struct CensorPolicy {
  double confirm_height = 0.0;
  double horizon = 1000.0;
  double budget = 1e-6;

  static CensorPolicy from_budget(double drift_floor, int dim, double budget, double horizon);

  // Tail bound at confirm_height; compare with `budget`.
  double misclassification_bound(double drift_floor, int dim) const;
  bool within_budget(double drift_floor, int dim) const;
  void validate() const;  // throws std::invalid_argument

  friend bool operator==(const CensorPolicy&, const CensorPolicy&) = default;
};

enum class Direction { kUp, kDown };

// First grid index >= from where v-hat . x reaches `level` (>= for up, <= for
// down).  nullopt when the record ends first.
std::optional<std::size_t> first_passage(const PathRecord& path, double level, Direction direction,
                                         std::size_t from = 0);

// max(p[from], interval maxima over (from, to]) of the projection.
double running_max(const PathRecord& path, std::size_t from, std::size_t to);

enum class RetractionStatus { kFinite, kConfirmedInfinite, kCensored };

struct RetractionOutcome {
  RetractionStatus status = RetractionStatus::kCensored;
  // Retraction index (finite), confirmation index, or last scanned index.
  std::size_t index = 0;
};

// D measured from grid point `from`: finite when the projection falls to
// start_level - 1, confirmed when it reaches start_level + confirm_height
// first, censored when the record (or policy horizon) ends before either.
RetractionOutcome detect_retraction(const PathRecord& path, double start_level, const CensorPolicy& policy,
                                    std::size_t from = 0);

struct LadderStep {
  double attempt_level = 0.0;             // M_{k-1} + r0 + 1
  std::optional<std::size_t> attempt;     // S_k, nullopt when censored
  RetractionStatus retraction = RetractionStatus::kCensored;  // R_k
  std::size_t retraction_index = 0;
  double running_max = 0.0;               // M_k, valid when R_k is finite
};

struct LadderRecord {
  std::size_t origin = 0;
  double base_level = 0.0;  // M_0
  std::vector<LadderStep> steps;

  bool confirmed() const {
    return !steps.empty() && steps.back().retraction == RetractionStatus::kConfirmedInfinite;
  }
  // K, the index of the first successful attempt; 0 while unresolved.
  std::size_t success_index() const { return confirmed() ? steps.size() : 0; }
  // Number of attempts whose retraction was observed (R_k finite).
  std::size_t finite_retractions() const;
  std::optional<std::size_t> nonretraction_index() const;
};

// The ladder S_k, R_k, M_k started at grid point `origin` with M_0 = p[origin].
// Stops at the first confirmed attempt, at censoring, or once `max_finite`
// retractions have been seen.
LadderRecord detect_ladder(const PathRecord& path, double dependence_range, const CensorPolicy& policy,
                           std::size_t origin = 0, std::size_t max_finite = SIZE_MAX);

struct Cycle {
  std::size_t start = 0;  // grid index of tau_k
  std::size_t end = 0;    // grid index of tau_{k+1}
  double duration = 0.0;
  Vec displacement;
};

struct RenewalDecomposition {
  std::size_t first_success_index = 0;  // K of the first ladder, 0 if unresolved
  std::vector<std::size_t> tau;         // grid indices of tau_1 < tau_2 < ...
  std::vector<Cycle> cycles;            // complete cycles between consecutive taus
  bool censored_tail = true;            // the segment after the last tau is incomplete

  std::vector<double> tau_times(double step) const;
};

// Successive ladders, each restarted at the previous nonretraction time.  A
// confirmation contradicted later in the record counts as a retraction, so every
// emitted tau_n satisfies the nonretraction property on the whole record.
RenewalDecomposition extract_regenerations(const PathRecord& path, double dependence_range,
                                           const CensorPolicy& policy);

// Smallest over grid points t >= tau_n of p(t) - p(tau_n), or +inf for the last point.
double min_after(const PathRecord& path, std::size_t index);

struct CycleFunctional {
  std::function<double(const Vec&)> map;  // F_p applied to u(x(t_p + s))
  double offset = 0.0;                    // t_p
};

struct CycleIncrement {
  double xi = 0.0;
  double duration = 0.0;
  Vec displacement;
  bool complete = true;
};

// xi_k = sum over grid points s in [tau_k, tau_{k+1}) of prod_p F_p(u(x(s + t_p))) * h.
std::vector<CycleIncrement> cycle_increments(const RenewalDecomposition& decomposition, const PathRecord& path,
                                             const FieldRealization& field,
                                             const std::vector<CycleFunctional>& functionals);

// Per-cycle CSV: path_id,k,tau_k,duration,disp_x0..,drift_disp,censored_flag.
// The trailing incomplete segment is written with censored_flag = 1.
void write_cycle_csv_header(std::ostream& out, int dim);
void write_cycle_csv_rows(std::ostream& out, std::size_t path_id, const RenewalDecomposition& decomposition,
                          const PathRecord& path);

}  // namespace tracerlab
