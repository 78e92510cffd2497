#pragma once

// Euler-Maruyama integration of dx = u(x) dt + sqrt(kappa) dW with a recorded,
// counter-addressed driving noise.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "tracerlab/field.hpp"
#include "tracerlab/philox.hpp"
#include "tracerlab/types.hpp"

namespace tracerlab {

struct SimParams {
  double step = 1e-3;
  double kappa = 1.0;
  double horizon = 1000.0;
  bool bridge_correction = false;

  void validate() const;  // throws std::invalid_argument
  std::size_t max_steps() const;

  friend bool operator==(const SimParams&, const SimParams&) = default;
};

inline constexpr std::uint32_t kNoiseDomain = 0x4E000000u;
inline constexpr std::uint32_t kBridgeDomain = 0x42000000u;

// Noise for path `stream_id` under `key`.  Step i's increment is a pure function
// of (key, stream_id, i), so a path can be regenerated or extended at any time.
struct NoiseStream {
  std::uint64_t key = 0;
  std::uint32_t stream_id = 0;

  // Delta W_i ~ N(0, step * I).
  Vec increment(std::uint64_t index, int dim, double step) const;
  // Uniforms in (0, 1] for the bridge maximum (first) and minimum (second) on
  // grid interval (t_{i-1}, t_i].
  std::array<double, 2> bridge_uniforms(std::uint64_t interval) const;

  friend bool operator==(const NoiseStream&, const NoiseStream&) = default;
};

class PathRecord {
 public:
  PathRecord(int dim, double step, double kappa, Vec direction, bool bridge, NoiseStream stream,
             bool store_noise);

  int dim() const { return dim_; }
  double step() const { return step_; }
  double kappa() const { return kappa_; }
  bool bridge_correction() const { return bridge_; }
  bool stores_noise() const { return store_noise_; }
  const NoiseStream& stream() const { return stream_; }
  const Vec& direction() const { return direction_; }

  // Number of grid points.
  std::size_t size() const { return drift_proj_.size(); }
  double time(std::size_t i) const { return static_cast<double>(i) * step_; }
  Vec position(std::size_t i) const;
  // Delta W_i driving the step from point i to point i + 1.
  Vec noise(std::size_t i) const;
  // v-hat . position(i)
  double projection(std::size_t i) const { return drift_proj_[i]; }
  const std::vector<double>& projections() const { return drift_proj_; }

  // Extremes of v-hat . x over grid interval (t_{i-1}, t_i], i >= 1.  With the
  // bridge correction these are exact draws from the Brownian-bridge law of the
  // interpolated Euler path; otherwise the larger/smaller endpoint.
  double interval_max(std::size_t i) const;
  double interval_min(std::size_t i) const;

  void append(const Vec& x, const Vec* noise_increment);

 private:
  int dim_;
  double step_;
  double kappa_;
  Vec direction_;
  bool bridge_;
  NoiseStream stream_;
  bool store_noise_;
  std::vector<double> positions_;
  std::vector<double> noise_;
  std::vector<double> drift_proj_;
};

// One Euler-Maruyama step: x + u(x) h + sqrt(kappa) dW.
Vec step(const Vec& x, const FieldRealization& field, const SimParams& params, const Vec& noise_increment);
Vec step(const Vec& x, const Vec& velocity, const SimParams& params, const Vec& noise_increment);

enum class StopReason { kPredicate, kHorizon };

using StopPredicate = std::function<bool(const PathRecord&)>;

struct SimOutcome {
  PathRecord path;
  StopReason reason;
};

enum class NoiseStorage { kStore, kDiscard };

// Integrates from x0 until `stop` holds on the record (checked after every new
// grid point, the initial one included) or params.horizon is reached.
SimOutcome simulate(const FieldRealization& field, const SimParams& params, const Vec& x0,
                    const StopPredicate& stop, const NoiseStream& stream,
                    NoiseStorage storage = NoiseStorage::kStore);

// Continues an existing record under the same stream up to params.horizon.
// Earlier grid points are untouched, so the result equals a longer run from
// scratch with the same stream.
StopReason extend(PathRecord& path, const FieldRealization& field, const SimParams& params,
                  const StopPredicate& stop);

inline bool never_stop(const PathRecord&) { return false; }

// w_i = (x_{i+1} - x_i - u(x_i) h) / sqrt(kappa), the discrete counterpart of
// w(t) = x(t) - int_0^t u(x(s)) ds.
std::vector<Vec> reconstruct_brownian(const PathRecord& path, const FieldRealization& field);

// True when every reconstructed increment matches the stored noise up to the
// rounding of one Euler step.  Requires stored noise.
bool matches_recorded_noise(const PathRecord& path, const std::vector<Vec>& reconstructed);

// Index of the first grid point violating x_{i+1} == step(x_i, dW_i) bit for
// bit, or nullopt.  Requires stored noise.
std::optional<std::size_t> first_euler_violation(const PathRecord& path, const FieldRealization& field,
                                                 const SimParams& params);

// Little-endian dump: uint32 d, float64 h, uint64 n, then n*d float64
// positions in row-major order.
void write_path_dump(const PathRecord& path, std::ostream& out);

struct PathDump {
  std::uint32_t dim = 0;
  double step = 0.0;
  std::vector<double> positions;
};
PathDump read_path_dump(std::istream& in);

}  // namespace tracerlab
