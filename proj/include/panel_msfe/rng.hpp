#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace panel_msfe {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by (seed, cell, rep). The 128-bit counter is laid out
/// as [block_lo, block_hi, rep, cell] and the key is the 64-bit seed, so any
/// (cell, rep) sub-stream can be reproduced without touching the others.
class PhiloxStream {
 public:
  using result_type = std::uint64_t;

  explicit PhiloxStream(std::uint64_t seed, std::uint32_t cell = 0, std::uint32_t rep = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        cell_(cell),
        rep_(rep) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  PhiloxStream substream(std::uint32_t cell, std::uint32_t rep) const {
    PhiloxStream s(0, cell, rep);
    s.key_ = key_;
    return s;
  }

  result_type operator()() {
    if (lane_ == 2) refill();
    const std::size_t j = 2 * lane_++;
    return (static_cast<std::uint64_t>(buffer_[j + 1]) << 32) | buffer_[j];
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  void refill() {
    buffer_ = block({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                     rep_, cell_},
                    key_);
    ++counter_;
    lane_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t cell_;
  std::uint32_t rep_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  std::size_t lane_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace panel_msfe
