#pragma once

#include <cstdint>
#include <random>

namespace blhmm {

/// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of substream `index` under `root`: mix64(mix64(root) ^ mix64(index + 1)).
/// Chains use index = chain_id; replicates and per-draw Monte Carlo use their
/// own ordinal. Distinct (root, index) pairs give unrelated streams.
inline constexpr std::uint64_t substream_seed(std::uint64_t root, std::uint64_t index) {
  return mix64(mix64(root) ^ mix64(index + 1));
}

/// A reproducible random number stream.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  RandomStream substream(std::uint64_t index) const {
    return RandomStream(substream_seed(seed_hint(), index));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  // Derived from the engine state without advancing it.
  std::uint64_t seed_hint() const {
    std::mt19937_64 copy = engine_;
    return copy();
  }

  std::mt19937_64 engine_;
};

}  // namespace blhmm
