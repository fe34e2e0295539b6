#pragma once

#include <cstdint>
#include <vector>

namespace msamil {

/// xoshiro256** seeded through splitmix64.
///
/// The algorithm is fixed so that runs are reproducible across implementations:
/// state words come from four successive splitmix64 outputs of the seed, doubles
/// take the top 53 bits of next(), and integers below n use Lemire's widening
/// multiply with rejection.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();                              // [0, 1)
  double uniform(double lo, double hi);          // [lo, hi)
  std::uint64_t below(std::uint64_t n);          // [0, n)
  int integer(int lo, int hi);                   // [lo, hi]
  double normal();                               // Box-Muller, one draw per call

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

// Derives an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace msamil
