#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace randproto {

/// SplitMix64 step. Used for seeding and for deriving sub-seeds.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Derives an independent seed for a named stream (and optional index) from a
/// master seed. Stable across platforms: FNV-1a over the tag, then SplitMix64.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index = 0) noexcept;

/// xoshiro256** with a documented Gaussian transform.
///
/// Uniform doubles take the top 53 bits. Gaussians use the basic Box-Muller
/// transform on (u1, u2) with u1 in (0, 1], u2 in [0, 1); both outputs of a
/// pair are returned in order (cos branch first).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform in [0, 1).
  double uniform() noexcept;

  /// Uniform integer in [0, n), unbiased (rejection on the low range).
  std::uint64_t bounded(std::uint64_t n) noexcept;

  double gaussian() noexcept;

  /// +1 or -1 with equal probability (one full draw per call, top bit).
  double bipolar() noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace randproto
