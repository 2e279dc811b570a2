#pragma once

#include <cstdint>
#include <limits>

namespace mqi {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream key from a master seed and a counter
// (trial id, resample index, cycle index...). Pure function of its inputs,
// so any partition of the counter space across workers yields the same
// per-counter streams.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed,
                                    std::uint64_t counter,
                                    std::uint64_t domain = 0) noexcept {
  return mix64(mix64(master_seed ^ mix64(domain)) ^ mix64(counter + 0x632be59bd9b4e019ULL));
}

/// Small counter-based random stream. Satisfies UniformRandomBitGenerator so
/// it can drive <random> distributions, but the simulator itself only uses
/// uniform(), which is bit-stable across standard libraries.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr RandomStream(std::uint64_t key) noexcept : state_(key) {}
  constexpr RandomStream(std::uint64_t master_seed, std::uint64_t counter,
                         std::uint64_t domain = 0) noexcept
      : state_(derive_seed(master_seed, counter, domain)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  constexpr bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t state_;
};

}  // namespace mqi
