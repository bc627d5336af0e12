#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gpvs {

/// Seeded random stream owned by exactly one chain or generator.
class Random {
 public:
  using Engine = std::mt19937_64;

  explicit Random(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double normal() { return normal_(engine_); }
  double exponential() { return -std::log(uniform()); }
  /// Gamma with the given shape and rate (mean shape/rate).
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::int64_t poisson(double mean) { return std::poisson_distribution<std::int64_t>(mean)(engine_); }

  Engine& engine() { return engine_; }

 private:
  Engine engine_;
  std::normal_distribution<double> normal_;
};

/// One step of the splitmix64 generator.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed of chain `index` derived from a master seed: the (index+1)-th output
/// of splitmix64 started at `master`.
std::uint64_t chain_seed(std::uint64_t master, std::size_t index);

}  // namespace gpvs
