#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

namespace chartwave {

/// Seeded 64-bit Mersenne Twister with portable conversions to uniforms,
/// bounded integers and Bernoulli draws. The standard distribution adaptors
/// are implementation-defined, so every draw goes through the raw engine and
/// results are reproducible across standard libraries. The full engine state
/// can be exported and restored, which is what lets a saved session resume
/// exactly where it stopped.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n); n must be positive. Rejection sampling, no
  /// modulo bias.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  std::string state() const;
  void restore(std::string_view state);

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

/// Stable seed derived from a base seed and a list of discriminators.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

/// FNV-1a, used to turn names into seed discriminators.
std::uint64_t hash_string(std::string_view text);

}  // namespace chartwave
