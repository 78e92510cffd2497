#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tracerlab {

enum class EstimateStatus { kOk, kInconclusive };

std::string to_string(EstimateStatus status);

struct Estimate {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  EstimateStatus status = EstimateStatus::kOk;
  std::string note;

  bool ok() const { return status == EstimateStatus::kOk; }
  std::array<double, 2> ci95() const { return {value - 1.96 * std_error, value + 1.96 * std_error}; }

  static Estimate inconclusive(std::string name, std::size_t n, std::string reason);
};

// sqrt(a^2 + b^2)
double combined_se(double a, double b);

// Sample mean with standard error s / sqrt(n), s the unbiased sample deviation.
Estimate sample_mean(std::string name, std::span<const double> samples);

// Fraction of successes with binomial standard error sqrt(p (1 - p) / n).
Estimate proportion(std::string name, std::size_t successes, std::size_t trials);

// Number of batches used for batch-means errors: ceil(sqrt(n)).
std::size_t batch_count(std::size_t n);

// Mean of a correlated sequence; standard error from the means of ceil(sqrt(n))
// consecutive batches.
Estimate batch_mean(std::string name, std::span<const double> samples);

// sum(numerators) / sum(denominators) with a batch-means delta-method error.
Estimate batch_ratio(std::string name, std::span<const double> numerators, std::span<const double> denominators);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
// distribution and the Stephens small-sample correction.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
double kolmogorov_survival(double lambda);

double lag1_autocorrelation(std::span<const double> samples);

}  // namespace tracerlab
