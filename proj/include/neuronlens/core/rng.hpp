#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace neuronlens {

/// Seedable generator with a fully pinned output sequence.
///
/// The engine is std::mt19937_64, whose output is fixed by the standard. The
/// bounded draw and the shuffle are implemented here (standard distributions
/// are implementation-defined), so a given seed replays identically on every
/// platform:
///   below(n):  draw r until r >= (2^64 - n) mod n, return r mod n
///   shuffle:   for i = n-1 .. 1: swap(v[i], v[below(i + 1)])
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace neuronlens
