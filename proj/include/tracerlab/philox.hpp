#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Every random draw in the library is a pure function of a 64-bit key and a
// 128-bit counter, so field parameters, path noise and bridge samples can be
// regenerated from their coordinates without carrying generator state.

#include <array>
#include <cmath>
#include <cstdint>

namespace tracerlab {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

namespace detail {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr void philox_round(PhiloxCounter& ctr, const PhiloxKey& key) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace detail

constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += detail::kPhiloxW0;
      key[1] += detail::kPhiloxW1;
    }
    detail::philox_round(ctr, key);
  }
  return ctr;
}

constexpr PhiloxKey make_key(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// SplitMix64 finalizer; used only to derive child seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  return mix64(mix64(master ^ mix64(tag)) + index);
}

// Uniform in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1]; safe as a log argument.
constexpr double to_unit_open0(std::uint64_t bits) {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

// The four output words as two 64-bit values.
struct PhiloxBlock {
  std::uint64_t a;
  std::uint64_t b;
};

constexpr PhiloxBlock philox_block(const PhiloxCounter& ctr, const PhiloxKey& key) {
  const PhiloxCounter out = philox4x32_10(ctr, key);
  return {(static_cast<std::uint64_t>(out[1]) << 32) | out[0],
          (static_cast<std::uint64_t>(out[3]) << 32) | out[2]};
}

// Two independent standard normals from one block (Box-Muller).
inline std::array<double, 2> box_muller(const PhiloxBlock& block) {
  const double radius = std::sqrt(-2.0 * std::log(to_unit_open0(block.a)));
  const double angle = 2.0 * M_PI * to_unit(block.b);
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace tracerlab
