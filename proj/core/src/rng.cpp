#include "supcl/rng.hpp"

#include <cmath>
#include <numbers>

namespace supcl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t tag) const {
  return RngStream{seed, splitmix64(stream_id ^ splitmix64(tag + 0x632be59bd9b4e019ULL))};
}

std::mt19937_64 RngStream::engine() const {
  return std::mt19937_64(splitmix64(seed) ^ splitmix64(~stream_id));
}

// Box-Muller keeps draws identical across standard library implementations.
double standard_normal(std::mt19937_64& engine) {
  double u1 = uniform01(engine);
  while (u1 <= 0.0) u1 = uniform01(engine);
  const double u2 = uniform01(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace supcl
