#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace hmmcpd {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, stream, substream). The 128-bit counter
/// holds the substream in its upper half and a block index in its lower half,
/// so every path of every stage draws from a disjoint, reproducible sequence
/// regardless of how paths are distributed across workers.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint32_t stream, std::uint32_t substream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        ctr_{0, 0, substream, stream} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (pos_ >= 4) refill();
    const std::uint64_t lo = out_[pos_++];
    const std::uint64_t hi = out_[pos_++];
    return (hi << 32) | lo;
  }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0,1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the spare variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  void refill() noexcept {
    std::array<std::uint32_t, 4> c = ctr_;
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += kW0;
      k[1] += kW1;
    }
    out_ = c;
    pos_ = 0;
    if (++ctr_[0] == 0) ++ctr_[1];
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> out_{};
  std::size_t pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Stage identifiers used to derive independent streams from one master seed.
enum class Stream : std::uint32_t {
  Paths = 1,
  LimitsMc = 2,
  SigmaOvershoot = 3,
  SigmaRenewal = 4,
  PolicyEval = 5,
  MeasureChange = 6,
  Generic = 7,
};

inline Philox make_rng(std::uint64_t seed, Stream stream, std::uint32_t substream) noexcept {
  return Philox(seed, static_cast<std::uint32_t>(stream), substream);
}

}  // namespace hmmcpd
