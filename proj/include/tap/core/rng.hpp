#pragma once

#include <cstdint>
#include <string>

namespace tap {

// splitmix64-seeded xoshiro256** generator. Distributions are implemented
// here (not via <random>) so sampled values are identical across standard
// library implementations and the state is a plain serializable value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Box-Muller without a cached spare, so state stays four words.
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p);

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::uint64_t s_[4];
};

// Deterministic seed derivation: mixes a base seed with a stream of tags.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag);
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag_a, std::uint64_t tag_b);

}  // namespace tap
