#include <doctest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "tracerlab/renewal.hpp"

using namespace tracerlab;
using testutil::constructed_path;

namespace {

CensorPolicy policy(double confirm, double horizon = 1e9) { return CensorPolicy{confirm, horizon, 1e-6}; }

std::vector<double> ramp(std::size_t n, double slope) {
  std::vector<double> p;
  for (std::size_t i = 0; i < n; ++i) p.push_back(slope * static_cast<double>(i));
  return p;
}

SimParams params(double step, double horizon, bool bridge) {
  SimParams p;
  p.step = step;
  p.horizon = horizon;
  p.bridge_correction = bridge;
  return p;
}

struct Mean {
  double n = 0, s = 0, s2 = 0;
  void add(double x) {
    n += 1;
    s += x;
    s2 += x * x;
  }
  double mean() const { return s / n; }
  double se() const { return std::sqrt((s2 / n - mean() * mean()) / (n - 1)); }
};

}  // namespace

TEST_CASE("first passage on constructed paths") {
  const PathRecord p = constructed_path({0.0, 0.5, 1.2, 0.7, 2.0});
  CHECK(first_passage(p, 1.0, Direction::kUp) == 2u);
  CHECK(first_passage(p, 1.0, Direction::kUp, 3) == 4u);
  CHECK(first_passage(p, 0.5, Direction::kUp) == 1u);  // ties count
  const PathRecord mono = constructed_path(ramp(50, 0.25));
  CHECK_FALSE(first_passage(mono, -1.0, Direction::kDown).has_value());
}

TEST_CASE("retraction detection") {
  SUBCASE("a dip of 1.01 at t = 0.5 is a finite retraction") {
    const PathRecord p = constructed_path({0.0, -0.2, -0.4, -0.6, -0.8, -1.01, 0.0, 3.0});
    const RetractionOutcome r = detect_retraction(p, 0.0, policy(10.0));
    CHECK(r.status == RetractionStatus::kFinite);
    CHECK(p.time(r.index) == doctest::Approx(0.5));
  }
  SUBCASE("a zero confirmation height confirms at once") {
    const PathRecord p = constructed_path({0.0, -5.0});
    const RetractionOutcome r = detect_retraction(p, 0.0, policy(0.0));
    CHECK(r.status == RetractionStatus::kConfirmedInfinite);
    CHECK(r.index == 0u);
  }
  SUBCASE("running out of record is censoring") {
    const PathRecord p = constructed_path({0.0, 0.5, 0.2, 0.9});
    CHECK(detect_retraction(p, 0.0, policy(5.0)).status == RetractionStatus::kCensored);
  }
  SUBCASE("the policy horizon censors") {
    const PathRecord p = constructed_path(ramp(100, 0.25));
    CHECK(detect_retraction(p, 0.0, policy(20.0, 2.0)).status == RetractionStatus::kCensored);
    CHECK(detect_retraction(p, 0.0, policy(20.0, 9.0)).status == RetractionStatus::kConfirmedInfinite);
  }
}

TEST_CASE("monotone projection gives K = 1") {
  const double r0 = 3.0;
  const PathRecord p = constructed_path(ramp(100, 0.25));
  const LadderRecord l = detect_ladder(p, r0, policy(5.0));
  REQUIRE(l.steps.size() == 1);
  CHECK(l.steps[0].attempt == first_passage(p, r0 + 1.0, Direction::kUp));
  CHECK(l.steps[0].attempt == 16u);
  CHECK(l.steps[0].retraction == RetractionStatus::kConfirmedInfinite);
  CHECK(l.success_index() == 1);
}

TEST_CASE("hand-built ladder with one retraction") {
  const double r0 = 3.0;
  // Up to r0 + 1.5, down 1.1 below the first attempt, then up for good.
  std::vector<double> proj;
  for (int i = 0; i <= 18; ++i) proj.push_back(0.25 * i);        // 0 .. 4.5, S_1 at index 16 (4.0)
  for (double v = 4.25; v >= 2.9 - 1e-12; v -= 0.25) proj.push_back(v);
  proj.back() = 2.9;                                              // 4.0 - 1.1
  for (double v = 3.0; v <= 20.0; v += 0.25) proj.push_back(v);
  const PathRecord p = constructed_path(proj);
  const LadderRecord l = detect_ladder(p, r0, policy(5.0));
  REQUIRE(l.steps.size() == 2);
  CHECK(l.success_index() == 2);
  CHECK(l.steps[0].attempt == 16u);
  CHECK(l.steps[0].retraction == RetractionStatus::kFinite);
  CHECK(p.projection(l.steps[0].retraction_index) <= 3.0);
  CHECK(l.steps[0].running_max == 4.5);
  CHECK(l.steps[1].attempt_level == 4.5 + r0 + 1.0);
  CHECK(p.projection(*l.steps[1].attempt) >= 8.5);
  CHECK(p.projection(*l.steps[1].attempt - 1) < 8.5);
  CHECK(l.nonretraction_index() == l.steps[1].attempt);
}

TEST_CASE("regenerations on a monotone path are spaced by fresh ladders") {
  const double r0 = 3.0;
  const PathRecord p = constructed_path(ramp(121, 0.25));
  const RenewalDecomposition d = extract_regenerations(p, r0, policy(5.0));
  CHECK(d.tau == std::vector<std::size_t>{16, 32, 48, 64, 80, 96});
  CHECK(d.first_success_index == 1);
  REQUIRE(d.cycles.size() == 5);
  for (const auto& c : d.cycles) {
    CHECK(c.duration == doctest::Approx(1.6));
    CHECK(c.displacement[0] == 4.0);
    CHECK(c.displacement[1] == 0.0);
  }
  CHECK(d.censored_tail);
}

TEST_CASE("a confirmation contradicted later in the record is not a regeneration") {
  const double r0 = 3.0;
  std::vector<double> proj = ramp(41, 0.25);  // to 10.0: S_1 at 4.0, confirmed at 9.0
  for (double v = 9.75; v >= 2.5; v -= 0.25) proj.push_back(v);
  for (double v = 2.75; v <= 30.0; v += 0.25) proj.push_back(v);
  const PathRecord p = constructed_path(proj);
  CHECK(detect_ladder(p, r0, policy(5.0)).confirmed());
  const RenewalDecomposition d = extract_regenerations(p, r0, policy(5.0));
  REQUIRE_FALSE(d.tau.empty());
  CHECK(d.tau.front() != 16u);
  for (const std::size_t t : d.tau) CHECK(min_after(p, t) >= -1.0);
}

TEST_CASE("ladder and nonretraction invariants on simulated paths") {
  FieldSpec spec = testutil::bump_spec(0.5);
  const double r0 = spec.dependence_range();
  const CensorPolicy pol = CensorPolicy::from_budget(spec.drift_floor(), spec.dim, 1e-6, 1e9);
  for (bool bridge : {false, true}) {
    for (std::uint32_t i = 0; i < 6; ++i) {
      const FieldRealization f = realize(spec, derive_seed(3, 3, i));
      const SimOutcome sim = simulate(f, params(1e-2, 1500.0, bridge), Vec::Zero(2), never_stop, NoiseStream{4, i},
                                      NoiseStorage::kDiscard);
      const PathRecord& path = sim.path;
      const RenewalDecomposition d = extract_regenerations(path, r0, pol);
      CHECK(d.tau.size() >= 10);
      for (std::size_t n = 0; n < d.tau.size(); ++n) {
        const std::size_t t = d.tau[n];
        CHECK(min_after(path, t) >= -1.0);
        if (bridge) {
          double m = std::numeric_limits<double>::infinity();
          for (std::size_t k = t + 1; k < path.size(); ++k) m = std::min(m, path.interval_min(k));
          CHECK(m - path.projection(t) > -1.0);
        }
        if (n > 0) CHECK(d.tau[n] > d.tau[n - 1]);
      }
      const LadderRecord l = detect_ladder(path, r0, pol);
      double prev_max = l.base_level;
      for (std::size_t k = 0; k < l.steps.size(); ++k) {
        const LadderStep& s = l.steps[k];
        if (!s.attempt) break;
        CHECK(s.attempt == first_passage(path, s.attempt_level, Direction::kUp));
        CHECK(s.attempt_level == prev_max + r0 + 1.0);
        if (s.retraction != RetractionStatus::kFinite) break;
        CHECK(s.retraction_index >= *s.attempt);
        CHECK(s.running_max >= prev_max);
        CHECK(s.running_max == running_max(path, 0, s.retraction_index));
        prev_max = s.running_max;
      }
    }
  }
}

TEST_CASE("extending the record only appends regenerations") {
  FieldSpec spec = testutil::bump_spec(0.5);
  const double r0 = spec.dependence_range();
  const CensorPolicy pol = CensorPolicy::from_budget(spec.drift_floor(), spec.dim, 1e-6, 1e9);
  for (std::uint32_t i = 0; i < 4; ++i) {
    const FieldRealization f = realize(spec, derive_seed(9, 9, i));
    SimOutcome sim = simulate(f, params(1e-2, 600.0, true), Vec::Zero(2), never_stop, NoiseStream{12, i},
                              NoiseStorage::kDiscard);
    const RenewalDecomposition before = extract_regenerations(sim.path, r0, pol);
    extend(sim.path, f, params(1e-2, 1200.0, true), never_stop);
    const RenewalDecomposition after = extract_regenerations(sim.path, r0, pol);
    REQUIRE(after.tau.size() >= before.tau.size());
    for (std::size_t n = 0; n < before.tau.size(); ++n) CHECK(after.tau[n] == before.tau[n]);
  }
}

TEST_CASE("constant field: K is geometric with success probability 1 - e^-2") {
  const double gamma = 0.8646647167633873;  // 1 - exp(-2)
  const FieldRealization f = realize(FieldSpec{}, 1);
  const double r0 = f.spec().dependence_range();
  Mean k;
  for (std::uint32_t i = 0; i < 4000; ++i) {
    const SimOutcome sim = simulate(f, params(1e-2, 400.0, true), Vec::Zero(2), never_stop, NoiseStream{21, i},
                                    NoiseStorage::kDiscard);
    const LadderRecord l = detect_ladder(sim.path, r0, policy(20.0));
    REQUIRE(l.confirmed());
    k.add(static_cast<double>(l.success_index()));
  }
  CHECK(std::abs(k.mean() - 1.0 / gamma) <= 3 * k.se());
}

TEST_CASE("constant field: mean cycle duration is stable under a tenfold finer step") {
  const FieldRealization f = realize(FieldSpec{}, 1);
  const double r0 = f.spec().dependence_range();
  auto cycle_mean = [&](double h, std::uint64_t key) {
    Mean m;
    for (std::uint32_t i = 0; m.n < 1500; ++i) {
      const SimOutcome sim = simulate(f, params(h, 1000.0, true), Vec::Zero(2), never_stop, NoiseStream{key, i},
                                      NoiseStorage::kDiscard);
      for (const auto& c : extract_regenerations(sim.path, r0, policy(20.0)).cycles) m.add(c.duration);
    }
    return m;
  };
  const Mean coarse = cycle_mean(1e-2, 31);
  const Mean fine = cycle_mean(1e-3, 32);
  CHECK(std::abs(coarse.mean() - fine.mean()) <= 3 * std::hypot(coarse.se(), fine.se()));
}

TEST_CASE("cycle functionals") {
  const FieldRealization f = realize(FieldSpec{}, 1);
  const double r0 = f.spec().dependence_range();
  const SimOutcome sim = simulate(f, params(1e-2, 300.0, true), Vec::Zero(2), never_stop, NoiseStream{40, 0});
  const RenewalDecomposition d = extract_regenerations(sim.path, r0, policy(20.0));
  REQUIRE(d.cycles.size() >= 5);

  const auto ones = cycle_increments(d, sim.path, f, {{[](const Vec&) { return 1.0; }, 0.0}});
  for (std::size_t k = 0; k < ones.size(); ++k) CHECK(ones[k].xi == doctest::Approx(d.cycles[k].duration));

  const Vec vhat = f.spec().direction();
  const auto drift = cycle_increments(d, sim.path, f, {{[&](const Vec& u) { return vhat.dot(u); }, 0.0}});
  for (std::size_t k = 0; k < drift.size(); ++k) {
    CHECK(drift[k].xi == doctest::Approx(f.spec().speed() * d.cycles[k].duration));
  }

  Vec total = Vec::Zero(2);
  for (const auto& c : d.cycles) total += c.displacement;
  const Vec direct = sim.path.position(d.tau.back()) - sim.path.position(d.tau.front());
  CHECK((total - direct).norm() <= 1e-9);

  const auto late = cycle_increments(d, sim.path, f, {{[](const Vec&) { return 1.0; }, 1e6}});
  for (const auto& c : late) CHECK_FALSE(c.complete);
}

TEST_CASE("censoring policy from a budget") {
  const double h = confirm_height_for_budget(1.0, 2, 1e-6);
  CHECK(retraction_tail_bound(1.0, 2, h) <= 1e-6);
  CHECK(retraction_tail_bound(1.0, 2, h * (1 - 1e-9)) > 1e-6);
  CHECK(h == doctest::Approx(8.0 * std::log(1e6)).epsilon(1e-3));
  CHECK(retraction_tail_bound(1.0, 2, 60.0) == doctest::Approx(0.0005533902724683355));
  const CensorPolicy p = CensorPolicy::from_budget(0.5, 2, 1e-6, 100.0);
  CHECK(p.within_budget(0.5, 2));
  CHECK_FALSE(policy(60.0).within_budget(1.0, 2));
}

TEST_CASE("cycle CSV layout") {
  const double r0 = 3.0;
  const PathRecord p = constructed_path(ramp(121, 0.25));
  const RenewalDecomposition d = extract_regenerations(p, r0, policy(5.0));
  std::ostringstream out;
  write_cycle_csv_header(out, 2);
  write_cycle_csv_rows(out, 7, d, p);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "path_id,k,tau_k,duration,disp_x0,disp_x1,drift_disp,censored_flag");
  std::getline(in, line);
  CHECK(line == "7,1,1.6000000000000001,1.6000000000000001,4,0,4,0");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 5);
  CHECK(rows.back().substr(rows.back().size() - 2) == ",1");
}
