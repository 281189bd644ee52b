#ifndef LOGITDYN_RNG_HPP
#define LOGITDYN_RNG_HPP

// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw; SC'11).
//
// Every draw is a pure function of (key, counter), so streams are
// reproducible on every platform and independent consumers never perturb
// one another. Layout used throughout this library:
//
//   key     = {seed & 0xffffffff, seed >> 32}
//   counter = {block & 0xffffffff, block >> 32, stream, 0}
//
// Block n yields four 32-bit words, packed into two 53-bit uniforms
// u = ((hi << 32 | lo) >> 11 + 0.5) * 2^-53, which lie strictly inside
// (0, 1). Standard normals are produced by Box-Muller: normal 2n and 2n+1
// come from block n.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace logitdyn {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Stream ids reserved by the library. Adding a consumer means adding a
/// stream, never sharing one.
enum class Stream : std::uint32_t {
  kFeatures = 0,
  kVerifyStates = 1,
  kTestStates = 2,
};

/// Random access view of one Philox stream. Stateless apart from a cursor
/// used by the sequential helpers.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(static_cast<std::uint32_t>(stream)) {}

  Philox4x32::Counter block(std::uint64_t n) const {
    return Philox4x32::generate(
        {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32), stream_, 0u}, key_);
  }

  std::array<double, 2> uniform_pair(std::uint64_t n) const {
    const auto b = block(n);
    return {to_unit(b[0], b[1]), to_unit(b[2], b[3])};
  }

  std::array<double, 2> normal_pair(std::uint64_t n) const {
    const auto [u1, u2] = uniform_pair(n);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
  }

  double normal_at(std::uint64_t index) const { return normal_pair(index / 2)[index % 2]; }

  // Sequential helpers. Each call consumes one whole block.
  double uniform() { return uniform_pair(cursor_++)[0]; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_pair(cursor_++)[0]; }
  std::uint64_t below(std::uint64_t n) {
    const auto b = block(cursor_++);
    const std::uint64_t bits = (std::uint64_t{b[0]} << 32) | b[1];
    return bits % n;
  }

 private:
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
  std::uint32_t stream_;
  std::uint64_t cursor_ = 0;
};

}  // namespace logitdyn

#endif  // LOGITDYN_RNG_HPP
