#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scoregrad/tensor.hpp"

namespace scoregrad {

enum class SdeKind { kVE, kVP, kSubVP };

std::string_view to_string(SdeKind kind);
SdeKind parse_sde_kind(std::string_view name);

/// Forward marginal p(x(t) | x(0)) = N(mean_coeff * x(0), std^2 I).
struct MarginalParams {
  double mean_coeff;
  double std;
};

/// Uniform grid t_i = i * T / N for i = 0..N with per-step discrete
/// coefficients. Index 0 is t = 0; alphas[0] is the empty product.
struct DiscretizationGrid {
  std::size_t steps = 0;
  double step = 0.0;
  std::vector<double> times;
  std::vector<double> betas;   // beta(t_i) * step   (VP / sub-VP)
  std::vector<double> sigmas;  // sigma(t_i)         (VE)
  std::vector<double> alphas;  // prod_{k=1..i} (1 - betas[k])
};

/// One of the three forward noising processes
///   VE:     dx = sqrt(d[sigma^2]/dt) dw,       sigma(t) = s_min (s_max/s_min)^t
///   VP:     dx = -beta/2 x dt + sqrt(beta) dw,  beta(t) linear in t
///   sub-VP: dx = -beta/2 x dt + sqrt(beta (1 - exp(-2 int_0^t beta))) dw
class SdeSpec {
 public:
  static SdeSpec ve(double sigma_min = 0.01, double sigma_max = 50.0, double horizon = 1.0);
  static SdeSpec vp(double beta_min = 0.1, double beta_max = 20.0, double horizon = 1.0);
  static SdeSpec sub_vp(double beta_min = 0.1, double beta_max = 20.0, double horizon = 1.0);

  SdeKind kind() const noexcept { return kind_; }
  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }
  double sigma_min() const noexcept { return sigma_min_; }
  double sigma_max() const noexcept { return sigma_max_; }
  double horizon() const noexcept { return horizon_; }

  double beta(double t) const;
  /// B(t) = int_0^t beta(s) ds in closed form.
  double beta_integral(double t) const;
  double sigma(double t) const;

  /// f(x, t) = drift_coeff(t) * x.
  double drift_coeff(double t) const;
  Tensor drift(const Tensor& x, double t) const;
  double diffusion(double t) const;
  MarginalParams marginal(double t) const;

  /// mean_coeff * x0 + std * z.
  Tensor perturb(const Tensor& x0, double t, const Tensor& z) const;
  /// Conditional score -z / std of a point produced by `perturb`.
  Tensor score_target(const Tensor& z, double t) const;

  DiscretizationGrid discretize(std::size_t steps) const;

  /// Standard deviation of the sampling prior at t = T.
  double prior_std() const noexcept;

  nlohmann::json to_json() const;
  static SdeSpec from_json(const nlohmann::json& j);

  friend bool operator==(const SdeSpec&, const SdeSpec&) = default;

 private:
  SdeSpec(SdeKind kind, double a, double b, double horizon);
  void check_time(const char* op, double t) const;

  SdeKind kind_ = SdeKind::kVP;
  double beta_min_ = 0.0;
  double beta_max_ = 0.0;
  double sigma_min_ = 0.0;
  double sigma_max_ = 0.0;
  double horizon_ = 1.0;
};

/// Simulated against analytic forward moments at one time.
struct MarginalCheck {
  double t = 0.0;
  double simulated_mean = 0.0;
  double simulated_std = 0.0;
  double mean = 0.0;
  double std = 0.0;
  double mean_se = 0.0;  // Monte-Carlo standard error of the mean
  double std_se = 0.0;   // and of the standard deviation
};

/// Simulates `paths` forward trajectories from x0 with Euler-Maruyama on
/// `steps` uniform steps (coefficients taken at step midpoints) and records
/// moments at each checkpoint, which must lie on the grid.
std::vector<MarginalCheck> simulate_marginals(const SdeSpec& sde, double x0, std::size_t paths,
                                              std::size_t steps,
                                              const std::vector<double>& checkpoints,
                                              std::uint64_t seed);

}  // namespace scoregrad
