#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <stdexcept>

namespace mhc {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream. A stream is identified by a 64-bit key that
/// is derived from a global seed and any number of integer coordinates
/// (replicate index, purpose tag, failure index, ...). Draws depend only on
/// the key and the draw counter, so results never depend on evaluation order
/// or on how work is split across threads.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) noexcept : key_(mix64(key)) {}

  static Stream keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t k = mix64(seed);
    for (auto c : coords) k = mix64(k ^ mix64(c + 0x632be59bd9b4e019ULL));
    return Stream(k);
  }

  /// Child stream; the parent is unaffected.
  Stream split(std::uint64_t coord) const noexcept {
    return Stream(mix64(key_ ^ mix64(coord + 0x2545f4914f6cdd1dULL)));
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0xd1342543de82ef95ULL);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    for (;;) {
      double u = static_cast<double>((*this)() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Stream::below: empty range");
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mhc
