#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace dsppnet {

// Stable seed derivation: splitmix64 applied to (base ^ fnv1a64(component)).
// Every consumer of randomness derives its own stream from the single run
// seed under a distinct component name, so adding or reordering consumers
// never shifts another consumer's sequence.
std::uint64_t derive_seed(std::uint64_t base, std::string_view component);

// mt19937_64 wrapped with explicit real/integer mappings.  The standard
// distributions are implementation-defined, so sequences drawn through this
// class are reproducible across standard libraries while the engine itself
// stays the well-tested stock generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi); requires lo <= hi.
  double uniform(double lo, double hi);

  // Uniform integer in [lo, hi], both inclusive; rejection sampled so the
  // distribution is exact.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // In-place Fisher-Yates with the portable integer mapping above.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::int64_t i = static_cast<std::int64_t>(items.size()) - 1; i > 0; --i) {
      const std::int64_t j = uniform_int(0, i);
      std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Identity permutation of length n shuffled with Rng(seed).
std::vector<int> random_permutation(int n, std::uint64_t seed);

}  // namespace dsppnet
