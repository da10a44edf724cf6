#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace latentlab {

namespace detail {

// splitmix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based generator: output n is mix(key, n). Streams derived with
/// split() are independent of how many draws the parent has made, so a
/// component's randomness does not shift when another component changes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : key_(detail::mix64(seed ^ 0x5eedULL)) {}

  Rng split(std::uint64_t stream) const {
    Rng child;
    child.key_ = detail::mix64(key_ ^ detail::mix64(stream + 0x632be59bd9b4e019ULL));
    return child;
  }

  Rng split(std::string_view label) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return split(h);
  }

  std::uint64_t next_u64() { return detail::mix64(key_ + detail::mix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  int range(int lo, int hi_inclusive) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  template <class V>
  void shuffle(std::vector<V>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace latentlab
