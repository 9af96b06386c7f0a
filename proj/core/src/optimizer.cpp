#include "scoregrad/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "scoregrad/errors.hpp"

namespace scoregrad {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step() {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto value = params_[k]->value().data();
    const auto grad = params_[k]->grad().data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      value[i] -= options_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (const Parameter* p : params_) p->zero_grad();
}

double gradient_norm(std::span<Parameter* const> params) {
  double acc = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad().data()) acc += g * g;
  }
  return std::sqrt(acc);
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  const double norm = gradient_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const Parameter* p : params) {
      for (double& g : p->grad().data()) g *= factor;
    }
  }
  return norm;
}

double ema_warmup_rate(double rate, std::size_t updates) noexcept {
  const double n = static_cast<double>(updates);
  return std::min(rate, (1.0 + n) / (10.0 + n));
}

void ema_update(std::span<Tensor> ema, std::span<Parameter* const> params, double rate) {
  if (ema.size() != params.size()) throw ShapeError("ema_update: parameter count mismatch");
  for (std::size_t k = 0; k < ema.size(); ++k) {
    if (ema[k].shape() != params[k]->shape()) {
      throw ShapeError("ema_update: shape mismatch " + to_string(ema[k].shape()) + " vs " +
                       to_string(params[k]->shape()) + " for " + params[k]->name());
    }
    auto e = ema[k].data();
    const auto v = params[k]->value().data();
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = rate * e[i] + (1.0 - rate) * v[i];
  }
}

}  // namespace scoregrad
