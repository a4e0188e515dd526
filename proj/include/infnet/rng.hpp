#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace infnet {

/// splitmix64 generator. Small, fast, and with a sequence that depends only
/// on the seed, so runs are reproducible regardless of platform stdlib.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n). n must be nonzero.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Fisher-Yates shuffle with this generator.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Named sub-streams of the run seed. Keeping streams disjoint makes every
/// consumer (init, shuffling, dropout, data splits) independently stable.
enum class Stream : std::uint64_t {
  init = 1,
  shuffle = 2,
  dropout = 3,
  data = 4,
  rules = 5,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                 std::uint64_t index = 0) {
  Rng mix(base ^ (static_cast<std::uint64_t>(stream) * 0xd6e8feb86659fd93ull));
  std::uint64_t s = mix.next_u64();
  return s ^ (Rng(index ^ 0xa5a5a5a55a5a5a5aull).next_u64());
}

}  // namespace infnet
