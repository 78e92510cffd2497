#include "tracerlab/sde.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace tracerlab {

void SimParams::validate() const {
  if (!std::isfinite(step) || !(step > 0.0)) throw std::invalid_argument("step must be finite and > 0");
  if (!std::isfinite(kappa) || !(kappa > 0.0)) throw std::invalid_argument("kappa must be finite and > 0");
  if (!std::isfinite(horizon) || !(horizon >= step)) {
    throw std::invalid_argument("horizon must be finite and >= step");
  }
}

std::size_t SimParams::max_steps() const {
  // Tolerate representation error in horizon / step.
  return static_cast<std::size_t>(std::floor(horizon / step * (1.0 + 1e-12)));
}

Vec NoiseStream::increment(std::uint64_t index, int dim, double step) const {
  const PhiloxKey k = make_key(key);
  const auto lo = static_cast<std::uint32_t>(index);
  const auto hi = static_cast<std::uint32_t>(index >> 32);
  const double scale = std::sqrt(step);
  Vec out(dim);
  const auto z01 = box_muller(philox_block({lo, hi, stream_id, kNoiseDomain}, k));
  out[0] = scale * z01[0];
  if (dim > 1) out[1] = scale * z01[1];
  if (dim > 2) out[2] = scale * box_muller(philox_block({lo, hi, stream_id, kNoiseDomain | 1u}, k))[0];
  return out;
}

std::array<double, 2> NoiseStream::bridge_uniforms(std::uint64_t interval) const {
  const PhiloxBlock b = philox_block(
      {static_cast<std::uint32_t>(interval), static_cast<std::uint32_t>(interval >> 32), stream_id, kBridgeDomain},
      make_key(key));
  return {to_unit_open0(b.a), to_unit_open0(b.b)};
}

PathRecord::PathRecord(int dim, double step, double kappa, Vec direction, bool bridge, NoiseStream stream,
                       bool store_noise)
    : dim_(dim),
      step_(step),
      kappa_(kappa),
      direction_(std::move(direction)),
      bridge_(bridge),
      stream_(stream),
      store_noise_(store_noise) {}

Vec PathRecord::position(std::size_t i) const {
  Vec x(dim_);
  const std::size_t base = i * static_cast<std::size_t>(dim_);
  for (int j = 0; j < dim_; ++j) x[j] = positions_[base + static_cast<std::size_t>(j)];
  return x;
}

Vec PathRecord::noise(std::size_t i) const {
  if (!store_noise_) throw std::logic_error("path record does not store noise");
  Vec w(dim_);
  const std::size_t base = i * static_cast<std::size_t>(dim_);
  for (int j = 0; j < dim_; ++j) w[j] = noise_[base + static_cast<std::size_t>(j)];
  return w;
}

// The maximum m of a Brownian bridge from a to b with variance kappa * h
// satisfies P[m >= y] = exp(-2 (y - a)(y - b) / (kappa h)); invert at U.
double PathRecord::interval_max(std::size_t i) const {
  const double a = drift_proj_[i - 1];
  const double b = drift_proj_[i];
  if (!bridge_) return std::max(a, b);
  const double u = stream_.bridge_uniforms(i)[0];
  const double gap = b - a;
  return 0.5 * (a + b + std::sqrt(gap * gap - 2.0 * kappa_ * step_ * std::log(u)));
}

double PathRecord::interval_min(std::size_t i) const {
  const double a = drift_proj_[i - 1];
  const double b = drift_proj_[i];
  if (!bridge_) return std::min(a, b);
  const double u = stream_.bridge_uniforms(i)[1];
  const double gap = b - a;
  return 0.5 * (a + b - std::sqrt(gap * gap - 2.0 * kappa_ * step_ * std::log(u)));
}

void PathRecord::append(const Vec& x, const Vec* noise_increment) {
  for (int j = 0; j < dim_; ++j) positions_.push_back(x[j]);
  drift_proj_.push_back(direction_.dot(x));
  if (store_noise_ && noise_increment != nullptr) {
    for (int j = 0; j < dim_; ++j) noise_.push_back((*noise_increment)[j]);
  }
}

Vec step(const Vec& x, const Vec& velocity, const SimParams& params, const Vec& noise_increment) {
  const double root_kappa = std::sqrt(params.kappa);
  Vec next(x.size());
  for (int j = 0; j < x.size(); ++j) {
    next[j] = x[j] + velocity[j] * params.step + root_kappa * noise_increment[j];
  }
  return next;
}

Vec step(const Vec& x, const FieldRealization& field, const SimParams& params, const Vec& noise_increment) {
  return step(x, field.velocity(x), params, noise_increment);
}

namespace {

StopReason advance(PathRecord& path, const FieldRealization& field, const SimParams& params,
                   const StopPredicate& stop) {
  const std::size_t last = params.max_steps();
  FieldProbe probe(field);
  Vec x = path.position(path.size() - 1);
  for (std::size_t i = path.size() - 1; i < last; ++i) {
    const Vec dw = path.stream().increment(i, path.dim(), params.step);
    x = step(x, probe.velocity(x), params, dw);
    path.append(x, &dw);
    if (stop(path)) return StopReason::kPredicate;
  }
  return StopReason::kHorizon;
}

}  // namespace

SimOutcome simulate(const FieldRealization& field, const SimParams& params, const Vec& x0,
                    const StopPredicate& stop, const NoiseStream& stream, NoiseStorage storage) {
  params.validate();
  const FieldSpec& spec = field.spec();
  if (x0.size() != spec.dim) throw std::invalid_argument("start point dimension mismatch");
  PathRecord path(spec.dim, params.step, params.kappa, spec.direction(), params.bridge_correction, stream,
                  storage == NoiseStorage::kStore);
  path.append(x0, nullptr);
  if (stop(path)) return {std::move(path), StopReason::kPredicate};
  const StopReason reason = advance(path, field, params, stop);
  return {std::move(path), reason};
}

StopReason extend(PathRecord& path, const FieldRealization& field, const SimParams& params,
                  const StopPredicate& stop) {
  params.validate();
  if (params.step != path.step() || params.kappa != path.kappa()) {
    throw std::invalid_argument("extend: step and kappa must match the record");
  }
  return advance(path, field, params, stop);
}

std::vector<Vec> reconstruct_brownian(const PathRecord& path, const FieldRealization& field) {
  std::vector<Vec> out;
  if (path.size() < 2) return out;
  out.reserve(path.size() - 1);
  const double root_kappa = std::sqrt(path.kappa());
  FieldProbe probe(field);
  Vec x = path.position(0);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec next = path.position(i + 1);
    const Vec u = probe.velocity(x);
    Vec w(path.dim());
    for (int j = 0; j < path.dim(); ++j) w[j] = ((next[j] - x[j]) - u[j] * path.step()) / root_kappa;
    out.push_back(std::move(w));
    x = next;
  }
  return out;
}

bool matches_recorded_noise(const PathRecord& path, const std::vector<Vec>& reconstructed) {
  if (reconstructed.size() + 1 != path.size()) return false;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const double root_kappa = std::sqrt(path.kappa());
  for (std::size_t i = 0; i < reconstructed.size(); ++i) {
    const Vec a = path.position(i);
    const Vec b = path.position(i + 1);
    const Vec w = path.noise(i);
    for (int j = 0; j < path.dim(); ++j) {
      const double scale = std::abs(a[j]) + std::abs(b[j]) + std::abs(b[j] - a[j]);
      const double tol = 8.0 * eps * scale / root_kappa + std::numeric_limits<double>::denorm_min();
      if (std::abs(reconstructed[i][j] - w[j]) > tol) return false;
    }
  }
  return true;
}

std::optional<std::size_t> first_euler_violation(const PathRecord& path, const FieldRealization& field,
                                                 const SimParams& params) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec expected = step(path.position(i), field, params, path.noise(i));
    const Vec actual = path.position(i + 1);
    for (int j = 0; j < path.dim(); ++j) {
      if (std::bit_cast<std::uint64_t>(expected[j]) != std::bit_cast<std::uint64_t>(actual[j])) return i;
    }
    if (path.projection(i) != path.direction().dot(path.position(i))) return i;
  }
  return std::nullopt;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "dump format assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated path dump");
  return value;
}

}  // namespace

void write_path_dump(const PathRecord& path, std::ostream& out) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(path.dim()));
  put_le<double>(out, path.step());
  put_le<std::uint64_t>(out, path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Vec x = path.position(i);
    for (int j = 0; j < path.dim(); ++j) put_le<double>(out, x[j]);
  }
}

PathDump read_path_dump(std::istream& in) {
  PathDump dump;
  dump.dim = get_le<std::uint32_t>(in);
  dump.step = get_le<double>(in);
  const auto n = get_le<std::uint64_t>(in);
  dump.positions.resize(n * dump.dim);
  for (double& v : dump.positions) v = get_le<double>(in);
  return dump;
}

}  // namespace tracerlab
