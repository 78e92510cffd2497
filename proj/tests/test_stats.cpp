#include <doctest.h>

#include <cmath>
#include <vector>

#include "tracerlab/philox.hpp"
#include "tracerlab/stats.hpp"

using namespace tracerlab;

namespace {

std::vector<double> uniforms(std::uint64_t seed, std::size_t n, double shift = 0.0) {
  const PhiloxKey key = make_key(seed);
  std::vector<double> out;
  for (std::uint32_t i = 0; out.size() < n; ++i) {
    out.push_back(to_unit(philox_block({i, 0, 0, 0}, key).a) + shift);
  }
  return out;
}

}  // namespace

TEST_CASE("binomial proportion") {
  const Estimate e = proportion("p", 30, 100);
  CHECK(e.value == 0.3);
  CHECK(e.std_error == doctest::Approx(std::sqrt(0.21 / 100)));
  CHECK(e.n == 100);
  CHECK(e.ci95()[0] == doctest::Approx(0.3 - 1.96 * std::sqrt(0.0021)));
  CHECK_FALSE(proportion("p", 0, 0).ok());
}

TEST_CASE("sample mean") {
  const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
  const Estimate e = sample_mean("m", x);
  CHECK(e.value == 5.0);
  CHECK(e.std_error == doctest::Approx(std::sqrt(32.0 / 7.0 / 8.0)));
  CHECK_FALSE(sample_mean("m", std::vector<double>{1.0}).ok());
}

TEST_CASE("batch means use ceil(sqrt(n)) batches") {
  CHECK(batch_count(16) == 4);
  CHECK(batch_count(17) == 5);
  CHECK(batch_count(2000) == 45);
  std::vector<double> x;
  for (int i = 1; i <= 16; ++i) x.push_back(i);
  // Batch means 2.5, 6.5, 10.5, 14.5.
  const Estimate e = batch_mean("b", x);
  CHECK(e.value == 8.5);
  CHECK(e.std_error == doctest::Approx(2.581988897471611));
}

TEST_CASE("batch ratio with delta-method error") {
  std::vector<double> num, den;
  for (int i = 1; i <= 9; ++i) {
    num.push_back(i);
    den.push_back(2.0);
  }
  // Batch ratios 1, 2.5, 4 with equal denominators.
  const Estimate r = batch_ratio("r", num, den);
  CHECK(r.value == 2.5);
  CHECK(r.std_error == doctest::Approx(0.8660254037844386));
  CHECK_FALSE(batch_ratio("r", std::vector<double>(9, 1.0), std::vector<double>(9, 0.0)).ok());
}

TEST_CASE("Kolmogorov survival function") {
  CHECK(kolmogorov_survival(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-12));
  CHECK(kolmogorov_survival(0.5) == doctest::Approx(0.9639452436648751).epsilon(1e-12));
  CHECK(kolmogorov_survival(0.0) == 1.0);
}

TEST_CASE("two-sample KS statistic and p-value") {
  const KsResult sep = ks_two_sample(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{6, 7, 8, 9, 10});
  CHECK(sep.statistic == 1.0);
  CHECK(sep.p_value == doctest::Approx(0.0037813540593701006).epsilon(1e-10));
  const KsResult mixed = ks_two_sample(std::vector<double>{0.1, 0.4, 0.35, 0.8, 0.9, 0.2},
                                       std::vector<double>{0.3, 0.5, 0.6, 0.7, 1.1});
  CHECK(mixed.statistic == doctest::Approx(0.4666666666666666));
  CHECK(mixed.p_value == doctest::Approx(0.45360941300007634).epsilon(1e-10));
  CHECK(mixed.n1 == 6);
  CHECK(mixed.n2 == 5);
}

TEST_CASE("KS keeps its level on same-distribution samples and detects a shift") {
  int rejections = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    rejections += ks_two_sample(uniforms(2 * s, 100), uniforms(2 * s + 1, 100)).p_value < 0.05;
  }
  // Binomial(200, 0.05): mean 10, sd 3.1.
  CHECK(rejections <= 20);
  CHECK(ks_two_sample(uniforms(1, 500), uniforms(2, 500, 0.2)).p_value < 1e-6);
}

TEST_CASE("lag-1 autocorrelation") {
  CHECK(lag1_autocorrelation(std::vector<double>{1, 2, 4, 3, 5, 7, 6, 8}) ==
        doctest::Approx(0.48214285714285715));
  const auto u = uniforms(9, 10000);
  CHECK(std::abs(lag1_autocorrelation(u)) <= 3.0 / std::sqrt(10000.0));
}

TEST_CASE("standard error shrinks as one over root n") {
  const Estimate small = sample_mean("s", uniforms(4, 1000));
  const Estimate large = sample_mean("l", uniforms(5, 100000));
  CHECK(small.std_error / large.std_error == doctest::Approx(10.0).epsilon(0.05));
  const Estimate bm_small = batch_mean("s", uniforms(4, 1000));
  const Estimate bm_large = batch_mean("l", uniforms(5, 100000));
  CHECK(bm_small.std_error / bm_large.std_error == doctest::Approx(10.0).epsilon(0.3));
}
