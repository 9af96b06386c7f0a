#include "scoregrad/sde.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"
#include "scoregrad/rng.hpp"

namespace scoregrad {

std::string_view to_string(SdeKind kind) {
  switch (kind) {
    case SdeKind::kVE: return "ve";
    case SdeKind::kVP: return "vp";
    case SdeKind::kSubVP: return "subvp";
  }
  return "?";
}

SdeKind parse_sde_kind(std::string_view name) {
  if (name == "ve" || name == "VE") return SdeKind::kVE;
  if (name == "vp" || name == "VP") return SdeKind::kVP;
  if (name == "subvp" || name == "subVP" || name == "sub-vp" || name == "sub-VP") {
    return SdeKind::kSubVP;
  }
  throw ConfigError("unknown SDE kind '" + std::string(name) + "' (expected ve, vp or subvp)");
}

SdeSpec::SdeSpec(SdeKind kind, double a, double b, double horizon)
    : kind_(kind), horizon_(horizon) {
  if (!(horizon > 0.0)) throw ConfigError("sde: horizon T_s must be > 0");
  if (kind == SdeKind::kVE) {
    if (!(a > 0.0 && a < b)) throw ConfigError("sde: require 0 < sigma_min < sigma_max");
    sigma_min_ = a;
    sigma_max_ = b;
  } else {
    if (!(a > 0.0 && a < b)) throw ConfigError("sde: require 0 < beta_min < beta_max");
    beta_min_ = a;
    beta_max_ = b;
  }
}

SdeSpec SdeSpec::ve(double sigma_min, double sigma_max, double horizon) {
  return SdeSpec(SdeKind::kVE, sigma_min, sigma_max, horizon);
}
SdeSpec SdeSpec::vp(double beta_min, double beta_max, double horizon) {
  return SdeSpec(SdeKind::kVP, beta_min, beta_max, horizon);
}
SdeSpec SdeSpec::sub_vp(double beta_min, double beta_max, double horizon) {
  return SdeSpec(SdeKind::kSubVP, beta_min, beta_max, horizon);
}

void SdeSpec::check_time(const char* op, double t) const {
  if (!(t >= 0.0 && t <= horizon_ * (1.0 + 1e-12))) {
    throw RangeError(std::string(op) + ": t_s=" + std::to_string(t) + " outside [0, " +
                     std::to_string(horizon_) + "]");
  }
}

double SdeSpec::beta(double t) const {
  return beta_min_ + (t / horizon_) * (beta_max_ - beta_min_);
}

double SdeSpec::beta_integral(double t) const {
  return beta_min_ * t + 0.5 * t * t / horizon_ * (beta_max_ - beta_min_);
}

double SdeSpec::sigma(double t) const {
  return sigma_min_ * std::pow(sigma_max_ / sigma_min_, t);
}

double SdeSpec::drift_coeff(double t) const {
  check_time("drift", t);
  return kind_ == SdeKind::kVE ? 0.0 : -0.5 * beta(t);
}

Tensor SdeSpec::drift(const Tensor& x, double t) const {
  const double c = drift_coeff(t);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
  return out;
}

double SdeSpec::diffusion(double t) const {
  check_time("diffusion", t);
  switch (kind_) {
    case SdeKind::kVE:
      return sigma(t) * std::sqrt(2.0 * std::log(sigma_max_ / sigma_min_));
    case SdeKind::kVP:
      return std::sqrt(beta(t));
    case SdeKind::kSubVP:
      return std::sqrt(beta(t) * -std::expm1(-2.0 * beta_integral(t)));
  }
  return 0.0;
}

MarginalParams SdeSpec::marginal(double t) const {
  check_time("marginal", t);
  if (kind_ == SdeKind::kVE) return {1.0, sigma(t)};
  const double b = beta_integral(t);
  const double mean_coeff = std::exp(-0.5 * b);
  const double one_minus = -std::expm1(-b);
  return {mean_coeff, kind_ == SdeKind::kVP ? std::sqrt(one_minus) : one_minus};
}

Tensor SdeSpec::perturb(const Tensor& x0, double t, const Tensor& z) const {
  if (x0.shape() != z.shape()) {
    throw ShapeError("perturb: shape mismatch " + to_string(x0.shape()) + " vs " +
                     to_string(z.shape()));
  }
  const MarginalParams m = marginal(t);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.mean_coeff * x0[i] + m.std * z[i];
  return out;
}

Tensor SdeSpec::score_target(const Tensor& z, double t) const {
  const double std = marginal(t).std;
  if (std == 0.0) {
    throw NumericalError("score_target: marginal std is 0 at t_s=" + std::to_string(t));
  }
  Tensor out(z.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -z[i] / std;
  return out;
}

DiscretizationGrid SdeSpec::discretize(std::size_t steps) const {
  if (steps < 2) throw ConfigError("discretize: need at least 2 steps");
  DiscretizationGrid grid;
  grid.steps = steps;
  grid.step = horizon_ / static_cast<double>(steps);
  grid.times.resize(steps + 1);
  grid.betas.assign(steps + 1, 0.0);
  grid.sigmas.assign(steps + 1, 0.0);
  grid.alphas.assign(steps + 1, 1.0);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) * grid.step;
    grid.times[i] = t;
    if (kind_ == SdeKind::kVE) {
      grid.sigmas[i] = sigma(t);
    } else {
      grid.betas[i] = beta(t) * grid.step;
      if (i > 0) grid.alphas[i] = grid.alphas[i - 1] * (1.0 - grid.betas[i]);
    }
  }
  return grid;
}

double SdeSpec::prior_std() const noexcept {
  return kind_ == SdeKind::kVE ? sigma(horizon_) : 1.0;
}

nlohmann::json SdeSpec::to_json() const {
  return {{"kind", std::string(to_string(kind_))},
          {"beta_min", beta_min_},
          {"beta_max", beta_max_},
          {"sigma_min", sigma_min_},
          {"sigma_max", sigma_max_},
          {"T_s", horizon_}};
}

SdeSpec SdeSpec::from_json(const nlohmann::json& j) {
  const SdeKind kind = parse_sde_kind(j.at("kind").get<std::string>());
  const double horizon = j.value("T_s", 1.0);
  if (kind == SdeKind::kVE) {
    return ve(j.value("sigma_min", 0.01), j.value("sigma_max", 50.0), horizon);
  }
  return SdeSpec(kind, j.value("beta_min", 0.1), j.value("beta_max", 20.0), horizon);
}

std::vector<MarginalCheck> simulate_marginals(const SdeSpec& sde, double x0, std::size_t paths,
                                              std::size_t steps,
                                              const std::vector<double>& checkpoints,
                                              std::uint64_t seed) {
  if (paths < 2) throw ConfigError("simulate_marginals: need at least 2 paths");
  if (steps < 1) throw ConfigError("simulate_marginals: need at least 1 step");
  const double dt = sde.horizon() / static_cast<double>(steps);
  std::vector<std::size_t> at;
  for (double t : checkpoints) {
    const double pos = t / dt;
    const double index = std::round(pos);
    if (t < 0.0 || t > sde.horizon() || std::abs(pos - index) > 1e-9) {
      throw ConfigError("simulate_marginals: checkpoint " + std::to_string(t) +
                        " is not on the simulation grid");
    }
    at.push_back(static_cast<std::size_t>(index));
  }
  RngStream rng(seed);
  // VE starts from sigma_min rather than a point mass.
  std::vector<double> x(paths);
  const double spread = sde.marginal(0.0).std;
  for (double& v : x) v = x0 + spread * rng.normal();
  std::vector<MarginalCheck> out(checkpoints.size());
  const double n = static_cast<double>(paths);
  auto record = [&](std::size_t step) {
    for (std::size_t k = 0; k < at.size(); ++k) {
      if (at[k] != step) continue;
      double sum = 0.0;
      for (double v : x) sum += v;
      const double mean = sum / n;
      double sq = 0.0;
      for (double v : x) sq += (v - mean) * (v - mean);
      const MarginalParams mp = sde.marginal(checkpoints[k]);
      out[k] = {checkpoints[k], mean, std::sqrt(sq / (n - 1.0)), mp.mean_coeff * x0, mp.std,
                mp.std / std::sqrt(n), mp.std / std::sqrt(2.0 * (n - 1.0))};
    }
  };
  record(0);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = (static_cast<double>(i) + 0.5) * dt;
    const double f = sde.drift_coeff(t) * dt;
    const double g = sde.diffusion(t) * std::sqrt(dt);
    for (double& v : x) v += f * v + g * rng.normal();
    record(i + 1);
  }
  return out;
}

}  // namespace scoregrad
