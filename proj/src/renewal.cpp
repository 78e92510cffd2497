#include "tracerlab/renewal.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace tracerlab {

double retraction_tail_bound(double drift_floor, int dim, double level) {
  return std::exp(-drift_floor * level / 4.0) + std::exp(-drift_floor * level / (4.0 * dim));
}

double confirm_height_for_budget(double drift_floor, int dim, double budget) {
  if (!(drift_floor > 0.0)) throw std::invalid_argument("drift floor must be > 0");
  if (!(budget > 0.0 && budget < 2.0)) throw std::invalid_argument("budget must lie in (0, 2)");
  // The bound is decreasing in the height; bracket then bisect.
  double lo = 0.0;
  double hi = 1.0;
  while (retraction_tail_bound(drift_floor, dim, hi) > budget) {
    lo = hi;
    hi *= 2.0;
  }
  for (int iter = 0; iter < 200 && hi - lo > 1e-12 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (retraction_tail_bound(drift_floor, dim, mid) > budget) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

CensorPolicy CensorPolicy::from_budget(double drift_floor, int dim, double budget, double horizon) {
  return CensorPolicy{confirm_height_for_budget(drift_floor, dim, budget), horizon, budget};
}

double CensorPolicy::misclassification_bound(double drift_floor, int dim) const {
  return retraction_tail_bound(drift_floor, dim, confirm_height);
}

bool CensorPolicy::within_budget(double drift_floor, int dim) const {
  return misclassification_bound(drift_floor, dim) <= budget;
}

void CensorPolicy::validate() const {
  if (!std::isfinite(confirm_height) || confirm_height < 0.0) {
    throw std::invalid_argument("confirm height must be finite and >= 0");
  }
  if (!std::isfinite(horizon) || !(horizon > 0.0)) throw std::invalid_argument("censor horizon must be > 0");
  if (!(budget > 0.0)) throw std::invalid_argument("misclassification budget must be > 0");
}

namespace {

std::size_t scan_end(const PathRecord& path, double horizon) {
  const double last = std::floor(horizon / path.step() * (1.0 + 1e-12));
  if (last + 1.0 >= static_cast<double>(path.size())) return path.size();
  return static_cast<std::size_t>(last) + 1;
}

}  // namespace

std::optional<std::size_t> first_passage(const PathRecord& path, double level, Direction direction,
                                         std::size_t from) {
  if (from >= path.size()) return std::nullopt;
  if (direction == Direction::kUp) {
    if (path.projection(from) >= level) return from;
    for (std::size_t i = from + 1; i < path.size(); ++i) {
      if (path.projection(i) >= level || (path.bridge_correction() && path.interval_max(i) >= level)) return i;
    }
  } else {
    if (path.projection(from) <= level) return from;
    for (std::size_t i = from + 1; i < path.size(); ++i) {
      if (path.projection(i) <= level || (path.bridge_correction() && path.interval_min(i) <= level)) return i;
    }
  }
  return std::nullopt;
}

double running_max(const PathRecord& path, std::size_t from, std::size_t to) {
  double best = path.projection(from);
  for (std::size_t i = from + 1; i <= to && i < path.size(); ++i) best = std::max(best, path.interval_max(i));
  return best;
}

RetractionOutcome detect_retraction(const PathRecord& path, double start_level, const CensorPolicy& policy,
                                    std::size_t from) {
  const std::size_t end = scan_end(path, policy.horizon);
  if (from >= end) return {RetractionStatus::kCensored, from};
  const double floor_level = start_level - 1.0;
  const double confirm_level = start_level + policy.confirm_height;
  if (path.projection(from) <= floor_level) return {RetractionStatus::kFinite, from};
  if (path.projection(from) >= confirm_level) return {RetractionStatus::kConfirmedInfinite, from};
  const bool bridge = path.bridge_correction();
  for (std::size_t i = from + 1; i < end; ++i) {
    const double p = path.projection(i);
    if (p <= floor_level || (bridge && path.interval_min(i) <= floor_level)) {
      return {RetractionStatus::kFinite, i};
    }
    if (p >= confirm_level) return {RetractionStatus::kConfirmedInfinite, i};
  }
  return {RetractionStatus::kCensored, end - 1};
}

std::size_t LadderRecord::finite_retractions() const {
  std::size_t count = 0;
  for (const auto& s : steps) count += s.retraction == RetractionStatus::kFinite ? 1 : 0;
  return count;
}

std::optional<std::size_t> LadderRecord::nonretraction_index() const {
  if (!confirmed()) return std::nullopt;
  return steps.back().attempt;
}

namespace {

// suffix[i] = min of the projection over grid points >= i and, with the bridge
// correction, over the interval minima of (i-1, i] onwards.
std::vector<double> suffix_minima(const PathRecord& path) {
  std::vector<double> suffix(path.size() + 1, std::numeric_limits<double>::infinity());
  for (std::size_t i = path.size(); i-- > 0;) {
    double m = std::min(suffix[i + 1], path.projection(i));
    if (i > 0 && path.bridge_correction()) m = std::min(m, path.interval_min(i));
    suffix[i] = m;
  }
  return suffix;
}

// With `suffix`, a confirmation later contradicted inside the record becomes
// the retraction it is.
LadderRecord ladder_impl(const PathRecord& path, double dependence_range, const CensorPolicy& policy,
                         std::size_t origin, std::size_t max_finite, const std::vector<double>* suffix) {
  LadderRecord ladder;
  ladder.origin = origin;
  ladder.base_level = path.projection(origin);
  const std::size_t end = scan_end(path, policy.horizon);
  double record_max = ladder.base_level;
  std::size_t cursor = origin;
  std::size_t finite = 0;
  while (finite < max_finite) {
    LadderStep s;
    s.attempt_level = record_max + dependence_range + 1.0;
    const auto attempt = first_passage(path, s.attempt_level, Direction::kUp, cursor);
    if (!attempt || *attempt >= end) {
      ladder.steps.push_back(s);
      break;
    }
    s.attempt = *attempt;
    RetractionOutcome r = detect_retraction(path, path.projection(*attempt), policy, *attempt);
    if (suffix != nullptr && r.status == RetractionStatus::kConfirmedInfinite) {
      const double floor_level = path.projection(*attempt) - 1.0;
      if ((*suffix)[r.index + 1] <= floor_level) {
        const auto late = first_passage(path, floor_level, Direction::kDown, r.index);
        r = {RetractionStatus::kFinite, *late};
      }
    }
    s.retraction = r.status;
    s.retraction_index = r.index;
    if (r.status == RetractionStatus::kFinite) {
      // Everything before the crossing interval stayed below the attempt level,
      // which already exceeds the previous maximum.
      const std::size_t from = *attempt > cursor ? *attempt - 1 : *attempt;
      record_max = std::max(record_max, running_max(path, from, r.index));
      s.running_max = record_max;
      ++finite;
      cursor = r.index;
      ladder.steps.push_back(s);
      continue;
    }
    ladder.steps.push_back(s);
    break;
  }
  return ladder;
}

}  // namespace

LadderRecord detect_ladder(const PathRecord& path, double dependence_range, const CensorPolicy& policy,
                           std::size_t origin, std::size_t max_finite) {
  return ladder_impl(path, dependence_range, policy, origin, max_finite, nullptr);
}

std::vector<double> RenewalDecomposition::tau_times(double step) const {
  std::vector<double> out;
  out.reserve(tau.size());
  for (const std::size_t i : tau) out.push_back(static_cast<double>(i) * step);
  return out;
}

RenewalDecomposition extract_regenerations(const PathRecord& path, double dependence_range,
                                           const CensorPolicy& policy) {
  RenewalDecomposition out;
  const std::vector<double> suffix = suffix_minima(path);
  std::size_t origin = 0;
  while (true) {
    const LadderRecord ladder = ladder_impl(path, dependence_range, policy, origin, SIZE_MAX, &suffix);
    const auto tau = ladder.nonretraction_index();
    if (!tau) break;
    if (out.tau.empty()) out.first_success_index = ladder.success_index();
    if (!out.tau.empty()) {
      const std::size_t start = out.tau.back();
      out.cycles.push_back(Cycle{start, *tau, static_cast<double>(*tau - start) * path.step(),
                                 path.position(*tau) - path.position(start)});
    }
    out.tau.push_back(*tau);
    origin = *tau;
  }
  out.censored_tail = true;
  return out;
}

double min_after(const PathRecord& path, std::size_t index) {
  double best = std::numeric_limits<double>::infinity();
  const double base = path.projection(index);
  for (std::size_t i = index + 1; i < path.size(); ++i) best = std::min(best, path.projection(i) - base);
  return best;
}

std::vector<CycleIncrement> cycle_increments(const RenewalDecomposition& decomposition, const PathRecord& path,
                                             const FieldRealization& field,
                                             const std::vector<CycleFunctional>& functionals) {
  std::vector<std::size_t> offsets;
  offsets.reserve(functionals.size());
  for (const auto& f : functionals) {
    if (!(f.offset >= 0.0)) throw std::invalid_argument("functional offsets must be >= 0");
    offsets.push_back(static_cast<std::size_t>(std::llround(f.offset / path.step())));
  }
  std::size_t max_offset = 0;
  for (const std::size_t o : offsets) max_offset = std::max(max_offset, o);

  FieldProbe probe(field);
  std::vector<CycleIncrement> out;
  out.reserve(decomposition.cycles.size());
  for (const Cycle& c : decomposition.cycles) {
    CycleIncrement inc;
    inc.duration = c.duration;
    inc.displacement = c.displacement;
    inc.complete = c.end - 1 + max_offset < path.size();
    if (inc.complete) {
      double sum = 0.0;
      for (std::size_t i = c.start; i < c.end; ++i) {
        double product = 1.0;
        for (std::size_t p = 0; p < functionals.size(); ++p) {
          product *= functionals[p].map(probe.velocity(path.position(i + offsets[p])));
        }
        sum += product;
      }
      inc.xi = sum * path.step();
    }
    out.push_back(std::move(inc));
  }
  return out;
}

namespace {

void put_number(std::ostream& out, double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  out << buf;
}

void put_row(std::ostream& out, std::size_t path_id, std::size_t k, double tau, double duration, const Vec& disp,
             double drift_disp, int censored) {
  out << path_id << ',' << k << ',';
  put_number(out, tau);
  out << ',';
  put_number(out, duration);
  for (int j = 0; j < disp.size(); ++j) {
    out << ',';
    put_number(out, disp[j]);
  }
  out << ',';
  put_number(out, drift_disp);
  out << ',' << censored << '\n';
}

}  // namespace

void write_cycle_csv_header(std::ostream& out, int dim) {
  out << "path_id,k,tau_k,duration";
  for (int j = 0; j < dim; ++j) out << ",disp_x" << j;
  out << ",drift_disp,censored_flag\n";
}

void write_cycle_csv_rows(std::ostream& out, std::size_t path_id, const RenewalDecomposition& decomposition,
                          const PathRecord& path) {
  const Vec& dir = path.direction();
  std::size_t k = 1;
  for (const Cycle& c : decomposition.cycles) {
    put_row(out, path_id, k++, path.time(c.start), c.duration, c.displacement, dir.dot(c.displacement), 0);
  }
  if (!decomposition.tau.empty() && decomposition.censored_tail) {
    const std::size_t start = decomposition.tau.back();
    const std::size_t last = path.size() - 1;
    const Vec disp = path.position(last) - path.position(start);
    put_row(out, path_id, k, path.time(start), static_cast<double>(last - start) * path.step(), disp, dir.dot(disp),
            1);
  }
}

}  // namespace tracerlab
