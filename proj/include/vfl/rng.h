#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace vfl {

// xoshiro256** seeded through splitmix64. All distributions are implemented
// here rather than via <random> so draw sequences are identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent child stream keyed by (seed, keys...), e.g. (party, epoch, batch).
  Rng split(std::initializer_list<std::uint64_t> keys) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  std::size_t uniform_index(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  double laplace(double scale);
  double exponential();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_keys(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

}  // namespace vfl
