#pragma once

#include <cstdint>
#include <random>

namespace supcl {

std::uint64_t splitmix64(std::uint64_t x);

// A reproducible random stream. Identical (seed, stream_id) pairs produce
// identical draws; derive() forks a child stream for a sub-site.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  RngStream derive(std::uint64_t tag) const;
  std::mt19937_64 engine() const;

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

double standard_normal(std::mt19937_64& engine);

}  // namespace supcl
