#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw is
// a pure function of (key, counter), so paths can be regenerated on any worker.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mrl {

using Philox4x32 = std::array<std::uint32_t, 4>;

inline Philox4x32 philox4x32_10(Philox4x32 ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

// Streams separate independent uses of one (seed, path) pair.
enum class Stream : std::uint32_t { brownian = 0, auxiliary = 1 };

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t path_index, Stream stream = Stream::brownian)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        path_(path_index),
        stream_(static_cast<std::uint32_t>(stream)) {}

  Philox4x32 block(std::uint32_t step, std::uint32_t slot) const {
    return philox4x32_10({step, (stream_ << 24) | slot, static_cast<std::uint32_t>(path_),
                          static_cast<std::uint32_t>(path_ >> 32)},
                         key_);
  }

  // Two uniforms in (0,1) with 53-bit resolution.
  static std::array<double, 2> uniforms(const Philox4x32& b) {
    const std::uint64_t a = (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
    const std::uint64_t c = (static_cast<std::uint64_t>(b[3]) << 32) | b[2];
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    return {((a >> 11) + 0.5) * scale, ((c >> 11) + 0.5) * scale};
  }

  // Standard normal pair for (step, slot) by Box-Muller.
  std::array<double, 2> normal_pair(std::uint32_t step, std::uint32_t slot) const {
    const auto u = uniforms(block(step, slot));
    const double r = std::sqrt(-2.0 * std::log(u[0]));
    const double phi = 2.0 * std::numbers::pi * u[1];
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  double normal(std::uint32_t step, std::uint32_t component) const {
    return normal_pair(step, component / 2)[component % 2];
  }

  double uniform(std::uint32_t step, std::uint32_t component) const {
    return uniforms(block(step, component / 2))[component % 2];
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t path_;
  std::uint32_t stream_;
};

}  // namespace mrl
