#pragma once

#include <cstdint>
#include <random>

namespace ddmpc {

/// Named random streams derived from one run seed.
enum class RngStream : std::uint64_t {
  kPlantParameters = 1,
  kNoise = 2,
  kExcitation = 3,
  kVerification = 4,
};

/// Portable generator: a 64-bit Mersenne Twister (bit-exact across standard
/// libraries) with distribution code implemented here rather than taken from
/// the standard library, whose distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream for (seed, stream) via SplitMix64 mixing.
  static Rng ForStream(std::uint64_t seed, RngStream stream);

  /// Uniform in [0, 1) with 53 random bits.
  double Uniform();
  double Uniform(double lo, double hi);
  /// Standard normal (Box-Muller).
  double Normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_{false};
  double spare_{0.0};
};

std::uint64_t SplitMix64(std::uint64_t x);

}  // namespace ddmpc
