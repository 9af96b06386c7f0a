#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scoregrad/autodiff.hpp"

namespace scoregrad {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options = {});

  /// Applies one update from the accumulated gradients.
  void step();
  void zero_grad();
  std::size_t steps() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t steps_ = 0;
};

/// Global L2 norm of all gradients.
double gradient_norm(std::span<Parameter* const> params);

/// Rescales gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::span<Parameter* const> params, double max_norm);

/// Decay for the n-th update (0-based): min(rate, (1 + n) / (10 + n)), so early
/// averages are not dominated by the initial weights on short runs.
double ema_warmup_rate(double rate, std::size_t updates) noexcept;

/// ema <- rate * ema + (1 - rate) * value, elementwise.
void ema_update(std::span<Tensor> ema, std::span<Parameter* const> params, double rate);

}  // namespace scoregrad
