#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "tracerlab/estimators.hpp"

using namespace tracerlab;

namespace {

Ensemble constant_ensemble(double mu = 1.0, double step = 1e-2, unsigned workers = 2) {
  Ensemble ens;
  ens.field.mean_velocity = Vec::Unit(2, 0) * mu;
  ens.sim.step = step;
  ens.sim.bridge_correction = true;
  ens.master_seed = 17;
  ens.workers = workers;
  return ens;
}

CensorPolicy confirm(double height, double horizon = 2000.0) { return CensorPolicy{height, horizon, 1e-6}; }

bool within(const Estimate& e, double expected, double k = 3.0) {
  return std::abs(e.value - expected) <= k * e.std_error;
}

// P[M_* >= m, D < inf] for drift mu and diffusivity kappa, integrated by Simpson's rule.
double truncated_max_mean_quadrature(double mu, double kappa) {
  const double a = 2.0 * mu / kappa;
  auto tail = [a](double m) { return (std::exp(a) - 1.0) * std::exp(-a * (m + 1.0)) / (std::exp(a) - std::exp(-a * m)); };
  const int n = 20000;
  const double top = 40.0, h = top / n;
  double sum = tail(0.0) + tail(top);
  for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * tail(i * h);
  return sum * h / 3.0;
}

}  // namespace

TEST_CASE("escape probability in a constant field") {
  SUBCASE("mu = 1") {
    const GammaResult g = estimate_gamma(constant_ensemble(1.0), confirm(20.0), 3000);
    CHECK(g.censored == 0);
    CHECK(within(g.gamma, 0.8646647167633873));
    for (const Check& c : g.checks) CHECK(c.pass);
  }
  SUBCASE("mu = 2") {
    const GammaResult g = estimate_gamma(constant_ensemble(2.0), confirm(20.0), 3000);
    CHECK(within(g.gamma, 0.9816843611112658));
  }
  SUBCASE("too few paths is inconclusive") {
    CHECK_FALSE(estimate_gamma(constant_ensemble(), confirm(20.0), 99).gamma.ok());
  }
}

TEST_CASE("supermartingale escape bound") {
  CHECK(supermartingale_escape_bound(1.0, 1.0) == doctest::Approx(1.0 - std::exp(-0.5)));
  CHECK(supermartingale_escape_bound(1.0, 8.0) == doctest::Approx(1.0 - std::exp(-0.25)));
}

TEST_CASE("backtrack probability in a constant field") {
  const TailCurve c = backtrack_tail(constant_ensemble(), {2.0, 4.0}, 20000, 1000.0);
  REQUIRE(c.points.size() == 2);
  CHECK(c.undecided == 0);
  CHECK(within(c.points[0].probability, 0.01798620996209156));
  CHECK(c.points[0].bound == doctest::Approx(std::exp(-0.5) + std::exp(-0.25)));
  CHECK(c.points[0].check.pass);
  CHECK(c.points[1].probability.value <= 0.0003353501304664781 + 3 * std::sqrt(0.0003353501304664781 / 20000));

  const TailCurve few = backtrack_tail(constant_ensemble(), {2.0, 20.0}, 100, 1000.0);
  CHECK(few.points[0].estimable);
  CHECK_FALSE(few.points[1].estimable);
  CHECK_FALSE(few.points[1].probability.ok());
  CHECK_THROWS_AS(backtrack_tail(constant_ensemble(), {4.0, 2.0}, 10, 10.0), std::invalid_argument);
}

TEST_CASE("truncated maximum mean in a constant field") {
  CHECK(truncated_max_mean_quadrature(1.0, 1.0) == doctest::Approx(0.06286694318088087).epsilon(1e-8));
  const MaxMeanResult r = conditional_max_mean(constant_ensemble(), confirm(20.0), 6000);
  REQUIRE(r.truncated_mean.ok());
  CHECK(within(r.truncated_mean, 0.06286694318088087));
  CHECK(r.finite > 600);
  REQUIRE_FALSE(r.checks.empty());
  CHECK(r.checks.back().pass);
}

TEST_CASE("hitting time ratio in a constant field") {
  const HittingResult h = hitting_time_ratio(constant_ensemble(1.0, 1e-3), 10.0, 1000, 200.0);
  CHECK(h.censored == 0);
  CHECK_FALSE(h.ratio_regime);
  CHECK(within(h.ratio, 1.0));
  CHECK(h.checks.front().pass);
}

TEST_CASE("restart survival is geometric in a constant field") {
  const RestartResult r = restart_survival(constant_ensemble(), confirm(20.0), 3, 5000, 0.86);
  REQUIRE(r.status == EstimateStatus::kOk);
  REQUIRE(r.survival.size() == 4);
  CHECK(r.survival[0].value == 1.0);
  for (std::size_t k = 1; k <= 3; ++k) CHECK(within(r.survival[k], std::exp(-2.0 * k)));
  for (const Check& c : r.checks) CHECK(c.pass);

  CHECK(restart_survival(constant_ensemble(), confirm(20.0), 0, 10, 0.5).status == EstimateStatus::kInconclusive);
  CHECK(restart_survival(constant_ensemble(), confirm(20.0), 9, 10, 0.5).status == EstimateStatus::kInconclusive);
}

TEST_CASE("law of large numbers drift in a constant field") {
  const VectorEstimate v = stokes_drift_lln(constant_ensemble(), 50.0, 400);
  REQUIRE(v.components.size() == 2);
  CHECK(within(v.components[0], 1.0));
  CHECK(within(v.components[1], 0.0));
  CHECK(v.components[0].std_error == doctest::Approx(std::sqrt(1.0 / 50.0 / 400.0)).epsilon(0.15));
}

TEST_CASE("renewal drift and Lagrangian bias in a constant field") {
  const Ensemble ens = constant_ensemble();
  const CycleCollection cycles = collect_cycles(ens, confirm(20.0), 2, 1500, 1000.0);
  REQUIRE(cycles.sufficient);
  const DriftReport d = drift_from_cycles(cycles, 2, 2);
  REQUIRE(d.status == EstimateStatus::kOk);
  CHECK(within(d.v_renewal.components[0], 1.0));
  CHECK(within(d.v_renewal.components[1], 0.0));
  CHECK(d.t_star.value > ens.field.dependence_range() + 1.0);
  for (const auto& c : cycles.cycles) CHECK(c.index >= 2);

  const Estimate bias = lagrangian_bias_from_cycles(cycles, ens.field);
  CHECK(std::abs(bias.value) <= 1e-9);

  const DriftReport few = drift_from_cycles(collect_cycles(ens, confirm(20.0), 2, 50, 1000.0), 2, 2);
  CHECK(few.status == EstimateStatus::kInconclusive);
}

TEST_CASE("cycle statistics are stationary in a constant field") {
  const StationaritySummary s = stationarity_repetitions(constant_ensemble(), confirm(20.0, 1e5), 20, 100, 20, 0.01);
  CHECK(s.incomplete == 0);
  REQUIRE(s.reports.size() == 20);
  // Binomial(20, ~0.98) falls below 16 with negligible probability.
  CHECK(s.passes >= 16);
}

TEST_CASE("stationarity test on a hand-built cycle list") {
  std::vector<Cycle> cycles;
  for (int k = 0; k < 30; ++k) {
    Cycle c;
    c.duration = k < 20 ? 1.0 + 0.01 * k : 5.0 + 0.01 * k;
    c.displacement = Vec::Unit(2, 0) * c.duration;
    cycles.push_back(c);
  }
  const StationarityReport r = stationarity_test(cycles, Vec::Unit(2, 0), 10, 10);
  CHECK(r.duration.statistic == 1.0);
  CHECK_FALSE(r.pass(0.01));
  CHECK_THROWS_AS(stationarity_test(cycles, Vec::Unit(2, 0), 11, 10), std::invalid_argument);
}

TEST_CASE("results do not depend on the worker count") {
  const GammaResult a = estimate_gamma(constant_ensemble(1.0, 1e-2, 1), confirm(10.0), 300);
  const GammaResult b = estimate_gamma(constant_ensemble(1.0, 1e-2, 4), confirm(10.0), 300);
  CHECK(a.confirmed == b.confirmed);
  CHECK(a.finite == b.finite);

  Ensemble bump = constant_ensemble(1.0, 1e-2, 1);
  bump.field = testutil::bump_spec(0.5);
  Ensemble bump4 = bump;
  bump4.workers = 4;
  const CycleCollection c1 = collect_cycles(bump, confirm(20.0), 1, 200, 500.0);
  const CycleCollection c4 = collect_cycles(bump4, confirm(20.0), 1, 200, 500.0);
  REQUIRE(c1.cycles.size() == c4.cycles.size());
  for (std::size_t i = 0; i < c1.cycles.size(); ++i) {
    CHECK(c1.cycles[i].duration == c4.cycles[i].duration);
    CHECK(c1.cycles[i].lagrangian_integral == c4.cycles[i].lagrangian_integral);
  }
}

TEST_CASE("doubling the confirmation height leaves gamma unchanged") {
  const GammaResult a = estimate_gamma(constant_ensemble(), confirm(10.0), 2000);
  const GammaResult b = estimate_gamma(constant_ensemble(), confirm(20.0), 2000);
  CHECK(std::abs(a.gamma.value - b.gamma.value) <= 3 * combined_se(a.gamma.std_error, b.gamma.std_error));
}

TEST_CASE("bump field satisfies the retraction bounds") {
  Ensemble ens = constant_ensemble();
  ens.field = testutil::bump_spec(0.5);
  const GammaResult g = estimate_gamma(ens, confirm(20.0), 400);
  for (const Check& c : g.checks) CHECK(c.pass);
  const HittingResult h = hitting_time_ratio(ens, 10.0 * ens.field.dependence_range(), 100, 2000.0);
  CHECK(h.ratio_regime);
  CHECK(h.checks.front().pass);
}

TEST_CASE("censoring audit finds no late retraction in a constant field") {
  const AuditResult a = misclassification_audit(constant_ensemble(), confirm(10.0), 300, 10.0);
  CHECK(a.confirmations == 300);
  CHECK(a.later_retractions == 0);
  CHECK(a.extended_height == 20.0);
  CHECK(a.paths >= 300);
}

TEST_CASE("quenched ensembles share one field") {
  Ensemble ens = constant_ensemble();
  ens.field = testutil::bump_spec(0.5);
  ens.environment = Environment::kQuenched;
  CHECK(ens.field_for(StreamTag::kGamma, 0).seed() == ens.field_for(StreamTag::kGamma, 5).seed());
  CHECK_FALSE(ens.stream_for(StreamTag::kGamma, 0) == ens.stream_for(StreamTag::kGamma, 5));
  ens.environment = Environment::kAnnealed;
  CHECK(ens.field_for(StreamTag::kGamma, 0).seed() != ens.field_for(StreamTag::kGamma, 5).seed());
}
