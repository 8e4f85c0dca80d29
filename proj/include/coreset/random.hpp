#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace coreset {

/// Random stream used by every stochastic component.
///
/// Wraps a 64-bit Mersenne Twister and draws variates without keeping any
/// distribution-side cache, so the engine state alone determines the future
/// of the stream. That is what makes checkpoint/resume bitwise exact.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed);

  /// Independent stream `stream` of root seed `seed`. The 256-bit seed
  /// material is produced by SplitMix64 over the counter (seed, stream), so
  /// streams never depend on how many draws other streams have made.
  static Rng stream(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }
  double normal();
  double exponential() { return -std::log(uniform_open0()); }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace coreset
