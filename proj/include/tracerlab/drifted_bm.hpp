#pragma once

// Closed-form laws of x(t) = mu t + sqrt(kappa) B(t), the projection of the
// tracer in a constant field.  Used to grade constant-field runs.

#include <cmath>

namespace tracerlab::drifted_bm {

// P[inf_t x(t) > -1]
inline double escape_probability(double mu, double kappa) { return 1.0 - std::exp(-2.0 * mu / kappa); }

// P[x hits -level before +level]
inline double backtrack_probability(double mu, double kappa, double level) {
  const double a = 2.0 * mu * level / kappa;
  return (1.0 - std::exp(-a)) / (std::exp(a) - std::exp(-a));
}

// E[first passage time to `level`] (Wald)
inline double mean_passage_time(double mu, double level) { return level / mu; }

// E[M_*; D < inf], M_* the maximum before the first visit to -1.  With
// a = 2 mu / kappa, P[M_* >= m, D < inf] = (e^a - 1) e^{-a(m+1)} / (e^a - e^{-am}),
// which integrates to (1 - e^{-a}) (-log(1 - e^{-a})) / a.
inline double truncated_max_mean(double mu, double kappa) {
  const double a = 2.0 * mu / kappa;
  const double q = -std::expm1(-a);
  return q * -std::log(q) / a;
}

}  // namespace tracerlab::drifted_bm
