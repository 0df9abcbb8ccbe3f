#include "tap/core/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tap/core/errors.hpp"

namespace tap {
namespace {

std::uint64_t splitmix(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw UsageError("Rng::below: n must be positive");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~0ull - (~0ull % n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::normal(double mean, double stddev) {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::string Rng::serialize() const {
  std::ostringstream os;
  os << s_[0] << ' ' << s_[1] << ' ' << s_[2] << ' ' << s_[3];
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  std::istringstream is(text);
  Rng r;
  for (auto& w : r.s_) {
    if (!(is >> w)) throw CorruptionError("malformed rng state: '" + text + "'");
  }
  return r;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t x = base ^ (tag * 0xD6E8FEB86659FD93ull);
  return splitmix(x);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag_a, std::uint64_t tag_b) {
  return mix_seed(mix_seed(base, tag_a), tag_b);
}

}  // namespace tap
