#pragma once

#include <cstdint>

#include "scoregrad/tensor.hpp"

namespace scoregrad {

/// Counter-based random stream: the i-th draw is a SplitMix64 hash of
/// (seed, i), so sequences are identical across runs and platforms and
/// streams can be split without shared state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, second variate cached).
  double normal() noexcept;
  std::size_t index(std::size_t n) noexcept;

  Tensor normal(Shape shape);
  Tensor uniform(Shape shape, double lo, double hi);

  /// Independent child stream identified by `id`; does not advance this stream.
  RngStream split(std::uint64_t id) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace scoregrad
