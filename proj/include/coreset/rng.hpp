#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>
#include <vector>

namespace coreset {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = kFnvOffset) noexcept {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= kFnvPrime;
  }
  return hash;
}

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// SplitMix64: a counter-based generator. Output n is mix(key + (n+1)*gamma),
/// so a stream is fully determined by its 64-bit key and the draw count.
///
/// All randomized strategies draw from streams keyed by
///   key = mix(master_seed) ^ fnv1a(stream_name)
/// which makes per-identity results independent of the processing schedule.
///
/// Derived draws (documented so they can be reproduced independently):
///   uniform01()     = (next() >> 11) * 2^-53
///   below(n)        = rejection sampling on next(); reject draws >= the
///                     largest multiple of n, then take draw % n
///   gaussian()      = Box-Muller cosine branch, u1 = 1 - uniform01(), u2 = uniform01()
class SplitMix64 {
public:
  using result_type = std::uint64_t;

  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  explicit constexpr SplitMix64(std::uint64_t key) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return next(); }

  constexpr std::uint64_t next() noexcept {
    state_ += kGamma;
    return splitmix64_mix(state_);
  }

  double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t draw = next();
    while (draw >= limit) draw = next();
    return draw % n;
  }

  double gaussian() noexcept {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  std::uint64_t state_;
};

inline SplitMix64 make_stream(std::uint64_t master_seed, std::string_view stream_name) noexcept {
  return SplitMix64(splitmix64_mix(master_seed) ^ fnv1a(stream_name));
}

/// Fisher-Yates, drawing swap positions from the back: for i = n-1 .. 1,
/// swap(items[i], items[below(i+1)]).
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Round half up; used for every k = round(ratio * N) budget.
inline std::size_t round_half_up(double x) noexcept {
  return x <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(x + 0.5));
}

inline std::size_t budget_for(double ratio, std::size_t n) noexcept {
  const std::size_t k = round_half_up(ratio * static_cast<double>(n));
  return k < 1 ? 1 : (k > n ? n : k);
}

} // namespace coreset
