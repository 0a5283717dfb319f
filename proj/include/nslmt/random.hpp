#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace nslmt {

/// Portable seeded random stream.
///
/// std::mt19937_64 with hand-written distributions; identical sequences on
/// every conforming standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer on [lo, hi] inclusive (rejection sampling, unbiased).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform index on [0, n). Requires n > 0.
  std::size_t index(std::size_t n);

  /// Uniform real on [0, 1) with 53 random bits.
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  /// Serializes / restores the engine state (textual form of mt19937_64).
  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent stream seed from a base seed and a list of tags.
/// Used for per-(seed, epoch, pair id) violation streams.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> tags);
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

/// Permutation of 0..n-1 drawn from the given stream.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

std::string hex64(std::uint64_t v);

}  // namespace nslmt
