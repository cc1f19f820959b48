#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace pspin {

// Counter-based random numbers (Philox4x32-10). Every draw is addressed by a
// 64-bit stream key and a 64-bit counter, so any coordinate of any stream can
// be regenerated without storing generator state. This is what makes disorder
// realizations, chains, and replicas reproducible bit-for-bit independent of
// thread count or evaluation order.

/// One Philox4x32-10 block: 128-bit counter + 64-bit key -> 128 output bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// splitmix64 finalizer; the mixing step of the key-derivation schedule.
std::uint64_t mix64(std::uint64_t x);

/// Derives a stream key by folding the parts into a fixed seed constant:
///   k = kKeyScheduleInit; for each part: k = mix64(k ^ part)
/// Parts are, by convention: (master_seed, domain tag, then domain-specific
/// indices such as realization, degree, replica, ladder slot).
std::uint64_t derive_stream_key(std::initializer_list<std::uint64_t> parts);

// Fixed key-schedule constants. Frozen: changing any of these changes every
// reported number.
inline constexpr std::uint64_t kKeyScheduleInit = 0x6a09e667f3bcc909ull;
inline constexpr std::uint64_t kTagDisorder = 0xa1c293d54b867f11ull;
inline constexpr std::uint64_t kTagChainInit = 0xb7e151628aed2a6bull;
inline constexpr std::uint64_t kTagChainSweep = 0x93c467e37db0c7a5ull;
inline constexpr std::uint64_t kTagExchange = 0xd1b54a32d192ed03ull;
inline constexpr std::uint64_t kTagScratch = 0x243f6a8885a308d3ull;

/// 64 uniform bits at (key, index).
std::uint64_t bits_at(std::uint64_t key, std::uint64_t index);

/// Uniform double in [0, 1) at (key, index).
double uniform_at(std::uint64_t key, std::uint64_t index);

/// Standard normal draw at (key, index); one Philox block per draw
/// (Box-Muller, cosine branch).
double gaussian_at(std::uint64_t key, std::uint64_t index);

/// Sequential view of a keyed stream. Copyable; (key, counter) pins the
/// exact position, so a chain can be resumed or replayed from a snapshot.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  std::uint64_t next_u64() { return bits_at(key_, counter_++); }

  /// Uniform in [0, 1).
  double next_u01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound); multiply-shift, deterministic.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  double next_gaussian() { return gaussian_at(key_, counter_++); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace pspin
