// Counter-based random number streams.
//
// Every stochastic consumer in the library derives its own stream key from
// (master seed, module tag, replicate, ...) and reads uniforms addressed by
// (generation n, individual j).  Addressed access is what makes the coupled
// construction possible: three processes of different sizes can read the
// identical uniform for individual j of generation n.

#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace branchcap::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; full-avalanche 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t combine(std::uint64_t key, std::uint64_t v) noexcept {
  return mix64(key + kGolden + v);
}

// Stable 64-bit tag hash (FNV-1a); std::hash is not pinned across toolchains.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_key(std::uint64_t master, std::string_view module_tag) noexcept {
  return combine(master, tag_hash(module_tag));
}

constexpr std::uint64_t derive_key(std::uint64_t master, std::string_view module_tag,
                                   std::uint64_t replicate) noexcept {
  return combine(derive_key(master, module_tag), replicate);
}

constexpr std::uint64_t derive_key(std::uint64_t master, std::string_view module_tag,
                                   std::uint64_t replicate, std::uint64_t extra) noexcept {
  return combine(derive_key(master, module_tag, replicate), extra);
}

constexpr double to_unit(std::uint64_t r) noexcept {
  return static_cast<double>(r >> 11) * 0x1.0p-53;  // [0, 1)
}

// U_{n,j}: the uniform for individual j of generation n under `key`.
constexpr double uniform_at(std::uint64_t key, std::uint64_t n, std::uint64_t j) noexcept {
  return to_unit(mix64(combine(key, n) + j * kGolden));
}

// Per-generation key, hoisted out of the individual loop.
constexpr std::uint64_t generation_key(std::uint64_t key, std::uint64_t n) noexcept {
  return combine(key, n);
}

constexpr double uniform_in_generation(std::uint64_t gen_key, std::uint64_t j) noexcept {
  return to_unit(mix64(gen_key + j * kGolden));
}

// Sequential counter stream over the same mix; satisfies
// UniformRandomBitGenerator so std:: distributions can consume it.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  explicit CounterEngine(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return mix64(key_ + (counter_++) * kGolden); }

  double uniform() noexcept { return to_unit((*this)()); }

  std::uint64_t words_drawn() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace branchcap::rng
