#include "tracerlab/field.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace tracerlab {

std::string to_string(BumpProfile profile) {
  switch (profile) {
    case BumpProfile::kQuartic:
      return "quartic";
  }
  return "unknown";
}

BumpProfile parse_profile(const std::string& name) {
  if (name == "quartic") return BumpProfile::kQuartic;
  throw FieldSpecError("unknown bump profile '" + name + "'");
}

double profile_slope_bound(double radius) { return 8.0 / (3.0 * std::sqrt(3.0) * radius); }

double FieldSpec::dependence_range() const { return cell_side * std::sqrt(static_cast<double>(dim)); }

double FieldSpec::gradient_bound() const { return bump_amplitude_cap * profile_slope_bound(bump_radius); }

void FieldSpec::validate() const {
  if (dim < 1 || dim > kMaxDim) {
    throw FieldSpecError("dimension must be in [1, " + std::to_string(kMaxDim) + "], got " +
                         std::to_string(dim));
  }
  if (mean_velocity.size() != dim) {
    throw FieldSpecError("mean velocity has " + std::to_string(mean_velocity.size()) +
                         " components, expected " + std::to_string(dim));
  }
  if (!mean_velocity.allFinite() || !(speed() > 0.0)) {
    throw FieldSpecError("mean velocity must be finite and nonzero");
  }
  if (!std::isfinite(bump_amplitude_cap) || bump_amplitude_cap < 0.0) {
    throw FieldSpecError("bump amplitude cap must be finite and >= 0");
  }
  if (!(bump_amplitude_cap < speed())) {
    std::ostringstream msg;
    msg << "condition (A) violated: amplitude cap " << bump_amplitude_cap
        << " must be strictly below |v| = " << speed();
    throw FieldSpecError(msg.str());
  }
  if (!std::isfinite(bump_radius) || !(bump_radius > 0.0)) {
    throw FieldSpecError("bump radius must be finite and > 0");
  }
  if (!std::isfinite(cell_side) || !(cell_side >= 2.0 * bump_radius)) {
    std::ostringstream msg;
    msg << "condition (DR) violated: cell side " << cell_side
        << " must be at least twice the bump radius " << bump_radius;
    throw FieldSpecError(msg.str());
  }
}

PhiloxCounter bump_counter(const CellIndex& cell, std::uint32_t block) {
  PhiloxCounter ctr{0, 0, 0, kBumpDomain | block};
  for (int j = 0; j < cell.size(); ++j) ctr[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(cell[j]);
  return ctr;
}

FieldRealization::FieldRealization(FieldSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), offset_(Vec::Zero(spec_.dim)) {
  spec_.validate();
  const PhiloxKey key = make_key(seed_);
  const PhiloxBlock b0 = philox_block({0, 0, 0, kOffsetDomain}, key);
  const PhiloxBlock b1 = philox_block({1, 0, 0, kOffsetDomain}, key);
  const std::uint64_t words[3] = {b0.a, b0.b, b1.a};
  for (int j = 0; j < spec_.dim; ++j) offset_[j] = spec_.cell_side * to_unit(words[j]);
}

CellIndex FieldRealization::cell_of(const Vec& x) const {
  CellIndex cell(spec_.dim);
  for (int j = 0; j < spec_.dim; ++j) {
    cell[j] = static_cast<int>(std::floor((x[j] - offset_[j]) / spec_.cell_side));
  }
  return cell;
}

Vec FieldRealization::cell_lower_corner(const CellIndex& cell) const {
  Vec corner(spec_.dim);
  for (int j = 0; j < spec_.dim; ++j) corner[j] = offset_[j] + spec_.cell_side * cell[j];
  return corner;
}

// Draw layout per cell (blocks 0..3, each two 64-bit words):
//   block 0: center uniforms for axes 0 and 1
//   block 1: center uniform for axis 2, radial uniform
//   blocks 2-3: Box-Muller normals for the amplitude direction
Bump FieldRealization::bump(const CellIndex& cell) const {
  const int d = spec_.dim;
  const PhiloxKey key = make_key(seed_);
  const PhiloxBlock b0 = philox_block(bump_counter(cell, 0), key);
  const PhiloxBlock b1 = philox_block(bump_counter(cell, 1), key);

  const double rho = spec_.bump_radius;
  const double span = spec_.cell_side - 2.0 * rho;
  const std::uint64_t center_words[3] = {b0.a, b0.b, b1.a};
  Bump out{cell_lower_corner(cell), Vec::Zero(d)};
  for (int j = 0; j < d; ++j) out.center[j] += rho + span * to_unit(center_words[j]);

  if (spec_.bump_amplitude_cap > 0.0) {
    const auto n01 = box_muller(philox_block(bump_counter(cell, 2), key));
    const auto n23 = box_muller(philox_block(bump_counter(cell, 3), key));
    const double normals[4] = {n01[0], n01[1], n23[0], n23[1]};
    Vec dir(d);
    for (int j = 0; j < d; ++j) dir[j] = normals[j];
    const double len = dir.norm();
    if (len > 0.0) {
      const double radius = spec_.bump_amplitude_cap * std::pow(to_unit(b1.b), 1.0 / d);
      out.amplitude = (radius / len) * dir;
    }
  }
  return out;
}

Vec FieldRealization::velocity(const Vec& x, const Bump& b) const {
  const double rho2 = spec_.bump_radius * spec_.bump_radius;
  const double r2 = (x - b.center).squaredNorm();
  if (r2 >= rho2) return spec_.mean_velocity;
  const double s = 1.0 - r2 / rho2;
  return spec_.mean_velocity + (s * s) * b.amplitude;
}

Mat FieldRealization::gradient(const Vec& x, const Bump& b) const {
  const double rho2 = spec_.bump_radius * spec_.bump_radius;
  const Vec rel = x - b.center;
  const double r2 = rel.squaredNorm();
  if (r2 >= rho2) return Mat::Zero(spec_.dim, spec_.dim);
  // d/dx_j phi(|x - c|) = -4 (1 - r^2/rho^2) (x_j - c_j) / rho^2
  const double scale = -4.0 * (1.0 - r2 / rho2) / rho2;
  return scale * b.amplitude * rel.transpose();
}

Vec FieldRealization::velocity(const Vec& x) const {
  if (spec_.bump_amplitude_cap == 0.0) return spec_.mean_velocity;
  return velocity(x, bump(cell_of(x)));
}

Mat FieldRealization::gradient(const Vec& x) const {
  if (spec_.bump_amplitude_cap == 0.0) return Mat::Zero(spec_.dim, spec_.dim);
  return gradient(x, bump(cell_of(x)));
}

double FieldRealization::divergence(const Vec& x) const { return gradient(x).trace(); }

FieldRealization realize(const FieldSpec& spec, std::uint64_t seed) { return FieldRealization(spec, seed); }

Vec FieldProbe::velocity(const Vec& x) {
  const FieldSpec& spec = field_->spec();
  if (spec.bump_amplitude_cap == 0.0) return spec.mean_velocity;
  CellIndex cell = field_->cell_of(x);
  if (!cached_ || cell != cell_) {
    bump_ = field_->bump(cell);
    cell_ = std::move(cell);
    cached_ = true;
  }
  return field_->velocity(x, bump_);
}

}  // namespace tracerlab
