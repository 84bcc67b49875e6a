#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace pirl {

/// SplitMix64 generator state. Plain value type: copying forks the stream.
struct RngState {
  std::uint64_t state = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Finalizer of SplitMix64, also used as a general-purpose 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// One SplitMix64 step: returns the advanced state and the output word.
constexpr std::pair<RngState, std::uint64_t> next_u64(RngState rng) noexcept {
  rng.state += kGolden;
  return {rng, mix64(rng.state)};
}

/// Top 53 bits of one SplitMix64 output scaled to [0, 1).
constexpr std::pair<RngState, double> uniform01(RngState rng) noexcept {
  auto [next, word] = next_u64(rng);
  return {next, static_cast<double>(word >> 11) * 0x1.0p-53};
}

/// Derive an independent seed from a parent seed and a stream tag.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
  return mix64(mix64(parent + kGolden) ^ (tag * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

/// Mutable convenience wrapper around RngState for call sites that draw many
/// values in sequence. Draws are identical to threading the state by hand.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed) : state_{seed} {}
  explicit Rng(RngState state) : state_(state) {}

  std::uint64_t next_u64() noexcept {
    auto [s, w] = pirl::next_u64(state_);
    state_ = s;
    return w;
  }

  double uniform() noexcept {
    auto [s, u] = uniform01(state_);
    state_ = s;
    return u;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    for (;;) {
      const std::uint64_t x = next_u64();
      const __uint128_t m = static_cast<__uint128_t>(x) * n;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  /// Standard normal deviate (Box-Muller, one value per call).
  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  RngState state() const noexcept { return state_; }

 private:
  RngState state_{};
};

}  // namespace pirl
