#pragma once

#include <cstdint>
#include <initializer_list>

namespace cpt {

// SplitMix64 finalizer; used to derive independent sub-seeds from a run seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> salts) noexcept {
  std::uint64_t s = mix_seed(seed);
  for (auto v : salts) s = mix_seed(s ^ v);
  return s;
}

// Stream tags for derive_seed so the init, shuffle and data streams never coincide.
namespace stream {
inline constexpr std::uint64_t init = 0x1;
inline constexpr std::uint64_t shuffle = 0x2;
inline constexpr std::uint64_t data = 0x3;
inline constexpr std::uint64_t split = 0x4;
}  // namespace stream

}  // namespace cpt
