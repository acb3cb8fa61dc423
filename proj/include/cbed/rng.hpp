#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cbed {

/// Mixes a parent seed with a key into an independent child seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key);

/// Same as above with a textual key, so call sites can name their streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

/// Seeded random stream. Substreams are derived from the construction seed,
/// not from the current engine state, so `substream(i)` is stable no matter
/// how many draws the parent has already made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  Rng substream(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }
  Rng substream(std::string_view key) const { return Rng(derive_seed(seed_, key)); }

  double normal() { return normal_(engine_); }
  double normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  double uniform(double lo, double hi);
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform_open() < p; }
  double gumbel();
  double logistic();
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cbed
