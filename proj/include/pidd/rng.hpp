#pragma once

#include <array>
#include <cstdint>

namespace pidd {

/// Counter-based Philox4x32-10 stream.
///
/// The 64-bit seed is the Philox key; the 128-bit counter is split into a
/// 64-bit draw index (low words) and the 64-bit stream id (high words). Every
/// value is a pure function of (seed, stream, index), so sequences are
/// identical on every platform and independent streams never overlap.
///
/// Derived draws:
///   uniform()  = (u64 >> 11) * 2^-53, in [0, 1)
///   normal()   = Box-Muller on two uniforms, both outputs used in order
///   below(n)   = rejection sampling on u64 (no modulo bias)
///
/// A stream is single-consumer; do not share one between threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  /// Uniform on (0, 1].
  double uniform_pos() noexcept;
  double normal() noexcept;
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Raw Philox4x32-10 block for a given counter and key.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                             std::array<std::uint32_t, 2> key) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pidd
