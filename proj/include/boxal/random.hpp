#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace boxal {

// Seeded generator: mt19937_64 plus hand-written transforms. Output is the
// same on every standard library; <random> distributions are not used.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream keyed by a root seed and any number of integer tags.
  static SimRng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::size_t uniform_index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller; always consumes two uniforms.
  double normal();
  // Knuth's multiplication method; intended for small rates.
  int poisson(double lambda);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace boxal
