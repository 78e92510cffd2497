#include "tracerlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tracerlab {

std::string to_string(EstimateStatus status) {
  return status == EstimateStatus::kOk ? "ok" : "inconclusive";
}

Estimate Estimate::inconclusive(std::string name, std::size_t n, std::string reason) {
  Estimate e;
  e.name = std::move(name);
  e.n = n;
  e.status = EstimateStatus::kInconclusive;
  e.note = std::move(reason);
  return e;
}

double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

Estimate sample_mean(std::string name, std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) return Estimate::inconclusive(std::move(name), n, "fewer than two samples");
  double mean = 0.0;
  for (const double x : samples) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const double x : samples) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n - 1);
  Estimate e;
  e.name = std::move(name);
  e.value = mean;
  e.std_error = std::sqrt(var / static_cast<double>(n));
  e.n = n;
  return e;
}

Estimate proportion(std::string name, std::size_t successes, std::size_t trials) {
  if (trials == 0) return Estimate::inconclusive(std::move(name), 0, "no trials");
  const double p = static_cast<double>(successes) / static_cast<double>(trials);
  Estimate e;
  e.name = std::move(name);
  e.value = p;
  e.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  e.n = trials;
  return e;
}

std::size_t batch_count(std::size_t n) {
  auto b = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  while (b * b < n) ++b;
  while (b > 1 && (b - 1) * (b - 1) >= n) --b;
  return b;
}

namespace {

// Batch j covers [bounds[j], bounds[j + 1]).
std::vector<std::size_t> batch_bounds(std::size_t n) {
  const std::size_t b = batch_count(n);
  std::vector<std::size_t> bounds(b + 1);
  for (std::size_t j = 0; j <= b; ++j) bounds[j] = j * n / b;
  return bounds;
}

}  // namespace

Estimate batch_mean(std::string name, std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 4) return Estimate::inconclusive(std::move(name), n, "too few samples for batch means");
  const auto bounds = batch_bounds(n);
  const std::size_t b = bounds.size() - 1;
  double total = 0.0;
  for (const double x : samples) total += x;
  const double mean = total / static_cast<double>(n);
  // Weighted batch means: batches differ in size by at most one.
  double ss = 0.0;
  for (std::size_t j = 0; j < b; ++j) {
    double sum = 0.0;
    for (std::size_t i = bounds[j]; i < bounds[j + 1]; ++i) sum += samples[i];
    const double len = static_cast<double>(bounds[j + 1] - bounds[j]);
    const double dev = sum - mean * len;
    ss += dev * dev;
  }
  const double mean_len = static_cast<double>(n) / static_cast<double>(b);
  Estimate e;
  e.name = std::move(name);
  e.value = mean;
  e.std_error = std::sqrt(ss / static_cast<double>(b * (b - 1))) / mean_len;
  e.n = n;
  return e;
}

Estimate batch_ratio(std::string name, std::span<const double> numerators, std::span<const double> denominators) {
  if (numerators.size() != denominators.size()) throw std::invalid_argument("batch_ratio: size mismatch");
  const std::size_t n = numerators.size();
  if (n < 4) return Estimate::inconclusive(std::move(name), n, "too few samples for batch means");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += numerators[i];
    den += denominators[i];
  }
  if (!(den > 0.0)) return Estimate::inconclusive(std::move(name), n, "nonpositive denominator");
  const double ratio = num / den;
  const auto bounds = batch_bounds(n);
  const std::size_t b = bounds.size() - 1;
  double ss = 0.0;
  for (std::size_t j = 0; j < b; ++j) {
    double resid = 0.0;
    for (std::size_t i = bounds[j]; i < bounds[j + 1]; ++i) resid += numerators[i] - ratio * denominators[i];
    ss += resid * resid;
  }
  const double mean_den = den / static_cast<double>(b);
  Estimate e;
  e.name = std::move(name);
  e.value = ratio;
  e.std_error = std::sqrt(ss / static_cast<double>(b * (b - 1))) / mean_den;
  e.n = n;
  return e;
}

double kolmogorov_survival(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-17) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  const double ne = std::sqrt(n1 * n2 / (n1 + n2));
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d);
  r.n1 = x.size();
  r.n2 = y.size();
  return r;
}

double lag1_autocorrelation(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 3) return 0.0;
  double mean = 0.0;
  for (const double x : samples) mean += x;
  mean /= static_cast<double>(n);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    den += (samples[i] - mean) * (samples[i] - mean);
    if (i + 1 < n) num += (samples[i] - mean) * (samples[i + 1] - mean);
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace tracerlab
