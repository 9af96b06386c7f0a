#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "scoregrad/autodiff.hpp"

namespace scoregrad {

struct GradCheckOptions {
  double step = 1e-5;
  /// Seed of the fixed projection used when the function is not scalar.
  std::uint64_t projection_seed = 0x5eed;
};

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|), where the
/// numeric gradient uses central differences. Non-scalar outputs are reduced
/// to a scalar by a fixed random projection.
double grad_check(const std::function<Var(Tape&, const Var&)>& fn, const Tensor& point,
                  GradCheckOptions options = {});

/// Same measure, taken with respect to every entry of the given parameters.
double grad_check_parameters(const std::function<Var(Tape&)>& fn,
                             std::span<Parameter* const> params,
                             GradCheckOptions options = {});

}  // namespace scoregrad
