#include "scoregrad/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "scoregrad/errors.hpp"
#include "scoregrad/rng.hpp"

namespace scoregrad {

namespace {

Var scalarize(Tape& tape, const Var& out, std::uint64_t seed) {
  if (out.value().size() == 1) return out;
  RngStream rng(seed);
  Var weights = tape.constant(rng.normal(out.shape()));
  return ops::sum(ops::mul(out, weights));
}

double evaluate(const std::function<Var(Tape&)>& fn, std::uint64_t seed) {
  Tape tape(GradMode::kInference);
  const double v = scalarize(tape, fn(tape), seed).value().item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite function value");
  return v;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

double grad_check(const std::function<Var(Tape&, const Var&)>& fn, const Tensor& point,
                  GradCheckOptions options) {
  Parameter input("input", point);
  std::vector<Parameter*> params{&input};
  return grad_check_parameters([&](Tape& tape) { return fn(tape, tape.parameter(input)); },
                               params, options);
}

double grad_check_parameters(const std::function<Var(Tape&)>& fn,
                             std::span<Parameter* const> params, GradCheckOptions options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var root = scalarize(tape, fn(tape), options.projection_seed);
    if (!root.value().all_finite()) throw NumericalError("grad_check: non-finite function value");
    tape.backward(root);
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    auto values = p->value().data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = evaluate(fn, options.projection_seed);
      values[i] = saved - options.step;
      const double minus = evaluate(fn, options.projection_seed);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      worst = std::max(worst, relative_error(p->grad()[i], numeric));
    }
  }
  return worst;
}

}  // namespace scoregrad
