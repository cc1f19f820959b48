#include "pspin/rng.hpp"

#include <cmath>
#include <numbers>

namespace pspin {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xd2511f53u;
  constexpr std::uint32_t kMul1 = 0xcd9e8d57u;
  constexpr std::uint32_t kWeyl0 = 0x9e3779b9u;
  constexpr std::uint32_t kWeyl1 = 0xbb67ae85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t prod0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t prod1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(prod1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(prod1),
           static_cast<std::uint32_t>(prod0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(prod0)};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t k = kKeyScheduleInit;
  for (std::uint64_t part : parts) {
    k = mix64(k ^ part);
  }
  return k;
}

namespace {

inline std::array<std::uint32_t, 4> block_at(std::uint64_t key,
                                             std::uint64_t index) {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
      0u, 0u};
  const std::array<std::uint32_t, 2> k = {static_cast<std::uint32_t>(key),
                                          static_cast<std::uint32_t>(key >> 32)};
  return philox4x32(ctr, k);
}

}  // namespace

std::uint64_t bits_at(std::uint64_t key, std::uint64_t index) {
  const auto out = block_at(key, index);
  return static_cast<std::uint64_t>(out[0]) |
         (static_cast<std::uint64_t>(out[1]) << 32);
}

double uniform_at(std::uint64_t key, std::uint64_t index) {
  return static_cast<double>(bits_at(key, index) >> 11) * 0x1.0p-53;
}

double gaussian_at(std::uint64_t key, std::uint64_t index) {
  const auto out = block_at(key, index);
  const std::uint64_t a = static_cast<std::uint64_t>(out[0]) |
                          (static_cast<std::uint64_t>(out[1]) << 32);
  const std::uint64_t b = static_cast<std::uint64_t>(out[2]) |
                          (static_cast<std::uint64_t>(out[3]) << 32);
  // u1 in (0, 1] keeps the log finite; u2 in [0, 1).
  const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pspin
