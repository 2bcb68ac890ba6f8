#pragma once

#include <cstdint>
#include <random>

namespace mixedreg::rng {

// SplitMix64 finalizer; bijective on uint64.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Counter-based random stream. Substreams are derived from the key alone,
/// never from draw state, so splitting is order-independent: stream.child(i)
/// yields the same stream no matter how many values were drawn from the
/// parent or from sibling streams.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key), engine_(mix64(mix64(key))) {}

  Stream child(std::uint64_t id) const {
    return Stream(mix64(key_ ^ mix64(id + 0x632be59bd9b4e019ull)));
  }

  std::uint64_t key() const { return key_; }

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }

  long poisson(double mean) {
    return std::poisson_distribution<long>(mean)(engine_);
  }

  int bernoulli(double p) {
    return std::bernoulli_distribution(p)(engine_) ? 1 : 0;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace mixedreg::rng
