#pragma once

// Stationary random velocity fields built from one compactly supported bump per
// cell of a randomly offset cubic lattice:
//
//   u(x) = v + a_c * phi(|x - c_c|),   c = cell(x),
//   phi(r) = (1 - (r/rho)^2)^2 for r <= rho, 0 otherwise.
//
// Each bump sits at least rho away from every face of its cell, so supports
// never cross cell boundaries and values in distinct cells are independent.
// |a_c| <= alpha < |v| keeps the drift component along v-hat at or above
// delta = |v| - alpha everywhere.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tracerlab/philox.hpp"
#include "tracerlab/types.hpp"

namespace tracerlab {

enum class BumpProfile { kQuartic };

std::string to_string(BumpProfile profile);
BumpProfile parse_profile(const std::string& name);

class FieldSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FieldSpec {
  int dim = 2;
  Vec mean_velocity = Vec::Unit(2, 0);
  double bump_amplitude_cap = 0.0;  // alpha
  double bump_radius = 1.0;         // rho
  double cell_side = 2.5;           // L
  BumpProfile profile = BumpProfile::kQuartic;

  double speed() const { return mean_velocity.norm(); }
  Vec direction() const { return mean_velocity / mean_velocity.norm(); }
  // delta: lower bound of u(x) . v-hat
  double drift_floor() const { return speed() - bump_amplitude_cap; }
  // r0 = L sqrt(d): two points farther apart than a cell diagonal never share a cell
  double dependence_range() const;
  // alpha * sup|phi'|, the Lipschitz constant of the fluctuation
  double gradient_bound() const;

  // Throws FieldSpecError naming the violated condition.
  void validate() const;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

// sup_r |phi'(r)| for the quartic profile: 8 / (3 sqrt(3) rho).
double profile_slope_bound(double radius);

struct Bump {
  Vec center;
  Vec amplitude;
};

// Domain tags in the top byte of the fourth Philox counter word.
inline constexpr std::uint32_t kBumpDomain = 0x46000000u;
inline constexpr std::uint32_t kOffsetDomain = 0x4F000000u;

// Counter for draw block `block` of cell `cell`.  Distinct cells map to
// distinct counters (cell coordinates are stored verbatim).
PhiloxCounter bump_counter(const CellIndex& cell, std::uint32_t block);

class FieldRealization {
 public:
  FieldRealization(FieldSpec spec, std::uint64_t seed);

  const FieldSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  const Vec& grid_offset() const { return offset_; }

  CellIndex cell_of(const Vec& x) const;
  Vec cell_lower_corner(const CellIndex& cell) const;
  Bump bump(const CellIndex& cell) const;

  Vec velocity(const Vec& x) const;
  Mat gradient(const Vec& x) const;
  double divergence(const Vec& x) const;

  // Variants that reuse a bump already looked up for cell_of(x).
  Vec velocity(const Vec& x, const Bump& bump) const;
  Mat gradient(const Vec& x, const Bump& bump) const;

 private:
  FieldSpec spec_;
  std::uint64_t seed_;
  Vec offset_;
};

FieldRealization realize(const FieldSpec& spec, std::uint64_t seed);

// Velocity lookups along a trajectory revisit the same cell for many steps;
// this keeps the last cell's bump.  Not shareable between threads.
class FieldProbe {
 public:
  explicit FieldProbe(const FieldRealization& field) : field_(&field) {}

  const FieldRealization& field() const { return *field_; }
  Vec velocity(const Vec& x);

 private:
  const FieldRealization* field_;
  CellIndex cell_;
  Bump bump_;
  bool cached_ = false;
};

}  // namespace tracerlab
