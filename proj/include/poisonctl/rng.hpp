#pragma once

#include <cmath>
#include <cstdint>

namespace poisonctl {

namespace detail {

// splitmix64 finalizer; bijective on 64-bit words
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace detail

/// Counter-based pseudo-random stream keyed by (seed, stream id).
///
/// Each output word is a hash of (seed, stream, counter), so a stream is a
/// pure function of its key: the same (seed, stream) replays the same
/// sequence regardless of process, platform, or thread count. Copies advance
/// independently.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    std::uint64_t h = seed_ + 0x9e3779b97f4a7c15ULL;
    h = detail::mix64(h ^ (stream_ * 0xd1b54a32d192ed03ULL));
    h = detail::mix64(h ^ (counter_ * 0x8cb92ba72f3d8dd7ULL));
    ++counter_;
    return h;
  }

  /// Uniform double in [0, 1), 53 mantissa bits.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw via Box-Muller. Always consumes exactly two words.
  double next_gaussian() {
    double u1 = 1.0 - next_uniform();  // (0, 1], keeps log finite
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Uniform integer in [0, n). Multiply-shift reduction; bias is O(n/2^64).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
};

/// Derives an independent child stream. Deterministic in (parent key,
/// child_id); the parent is not advanced.
inline RngStream rng_fork(const RngStream& parent, std::uint64_t child_id) {
  std::uint64_t child_stream = detail::mix64(
      parent.stream() ^ detail::mix64(child_id + 0x9e3779b97f4a7c15ULL));
  return RngStream(parent.seed(), child_stream);
}

}  // namespace poisonctl
