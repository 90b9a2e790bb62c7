#pragma once

#include <cstdint>

namespace geoflow {

/// xorshift64* (shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D).
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed) : s_(seed ? seed : 0x9E3779B97F4A7C15ull) {}

  std::uint64_t next() {
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 0x2545F4914F6CDD1Dull;
  }
  /// uniform on [0, 1) from the top 53 bits
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t s_;
};

}  // namespace geoflow
