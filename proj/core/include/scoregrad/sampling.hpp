#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "scoregrad/data.hpp"
#include "scoregrad/model.hpp"
#include "scoregrad/rng.hpp"
#include "scoregrad/sde.hpp"
#include "scoregrad/training.hpp"

namespace scoregrad {

enum class PredictorKind { kEulerMaruyama, kReverseDiffusion, kAncestral, kNone };
enum class CorrectorKind { kLangevin, kNone };

std::string_view to_string(PredictorKind kind);
std::string_view to_string(CorrectorKind kind);
PredictorKind parse_predictor(std::string_view name);
CorrectorKind parse_corrector(std::string_view name);

struct SamplerConfig {
  PredictorKind predictor = PredictorKind::kReverseDiffusion;
  CorrectorKind corrector = CorrectorKind::kLangevin;
  std::size_t steps = 100;
  std::size_t corrector_steps = 1;
  double snr = 0.16;
  /// Drop the noise term of the final predictor step.
  bool denoise_final = false;

  /// Default step count is 180 for sub-VP and 100 otherwise.
  static SamplerConfig defaults_for(SdeKind kind);
  void validate(const SdeSpec& sde) const;
  nlohmann::json to_json() const;
};

/// Predictor-corrector solver of the reverse-time SDE on the uniform grid
/// t_i = i T / N. A sample starts from the prior at t_N and for
/// k = N-1 .. 1 applies the predictor at t_{k+1} followed by M corrector
/// steps, for (N - 1)(1 + M) score evaluations in total.
class PcSampler {
 public:
  PcSampler(SdeSpec sde, SamplerConfig config);

  const SdeSpec& sde() const noexcept { return sde_; }
  const SamplerConfig& config() const noexcept { return config_; }
  const DiscretizationGrid& grid() const noexcept { return grid_; }

  /// Moves rows of x from grid index i to i - 1. `noise` is standard normal
  /// with the shape of x.
  Tensor predictor_step(const Tensor& x, const Tensor& score, std::size_t i,
                        const Tensor& noise) const;
  Tensor predictor_step(const Tensor& x, const ScoreFn& score, std::size_t i,
                        RngStream& rng) const;

  /// Langevin step with step size 2 alpha_i (r |z| / |g|)^2, the norms being
  /// averaged over the rows. Returns x unchanged when the score is zero.
  Tensor corrector_step(const Tensor& x, const Tensor& score, std::size_t i,
                        const Tensor& noise) const;
  Tensor corrector_step(const Tensor& x, const ScoreFn& score, std::size_t i,
                        RngStream& rng) const;

  /// Draws `rows` samples of dimension `dims`.
  Tensor sample(const ScoreFn& score, std::size_t rows, std::size_t dims, RngStream& rng,
                std::size_t* evaluations = nullptr) const;

  /// Score evaluations per sample.
  std::size_t evaluations() const noexcept;

 private:
  double corrector_alpha(std::size_t i) const;

  SdeSpec sde_;
  SamplerConfig config_;
  DiscretizationGrid grid_;
};

/// S x H x D forecast in the original scale.
struct ForecastSamples {
  Tensor values;
  Timestamp start{};
  Frequency freq = Frequency::kHourly;

  std::size_t samples() const { return values.dim(0); }
  std::size_t horizon() const { return values.dim(1); }
  std::size_t dims() const { return values.dim(2); }
  double at(std::size_t s, std::size_t h, std::size_t d) const {
    return values[(s * horizon() + h) * dims() + d];
  }
  nlohmann::json to_json() const;
};

struct ForecastRequest {
  /// Index of the first forecast point; the context is the preceding
  /// prediction-length block. May equal the dataset length.
  std::size_t origin = 0;
  std::size_t horizon = 1;
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Trajectories are processed in fixed-size groups, each with its own
/// random stream, so results do not depend on the thread count.
inline constexpr std::size_t kForecastGroup = 64;

/// Autoregressive forecast: encode the context, then per horizon step draw
/// x with the sampler, feed it back into the feature state and lag
/// covariates. Every trajectory evolves its own state.
ForecastSamples forecast(const ScoreGradModel& model, const Dataset& data,
                         const ForecastRequest& request, const SamplerConfig& sampler);

/// Seasonal-naive forecast: each horizon step copies the value one season
/// earlier. Returned as a single-sample forecast.
ForecastSamples seasonal_naive(const Dataset& data, std::size_t origin, std::size_t horizon);

}  // namespace scoregrad
