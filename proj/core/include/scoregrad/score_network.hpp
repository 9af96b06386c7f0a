#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scoregrad/autodiff.hpp"
#include "scoregrad/rng.hpp"
#include "scoregrad/sde.hpp"

namespace scoregrad {

struct ScoreNetworkConfig {
  std::size_t target_dim = 1;
  std::size_t feature_width = 40;
  std::size_t channels = 8;
  std::size_t blocks = 8;
  std::size_t fourier_features = 64;
  double fourier_scale = 16.0;

  /// Cycles 1, 2, 4, 8.
  std::size_t dilation(std::size_t block) const noexcept { return std::size_t{1} << (block % 4); }

  nlohmann::json to_json() const;
  static ScoreNetworkConfig from_json(const nlohmann::json& j);
};

struct BlockOutput {
  Var residual;  // (batch, C, D)
  Var skip;      // (batch, C, D)
};

struct ResidualBlockParams {
  Parameter time_proj;       // (C, C)
  Parameter time_bias;       // (C)
  Parameter dilated_kernel;  // (2C, C, 3)
  Parameter dilated_bias;    // (2C)
  Parameter cond_kernel;     // (2C, 1, 1)
  Parameter cond_bias;       // (2C)
  Parameter out_kernel;      // (2C, C, 1): residual half | skip half
  Parameter out_bias;        // (2C)
};

/// Conditional score model s(x, F, t_s).
///
/// The target vector is treated as a 1-channel signal of length D. A stem of
/// a 1x1 and a width-3 convolution lifts it to C channels, followed by
/// residual blocks of bidirectional dilated convolution and a gated
/// activation. The conditioner F is mapped to a length-D signal once and
/// projected to 2C channels per block; random Fourier features of t_s are
/// projected to C channels and added before each dilated convolution.
///
/// The network body predicts the standardized noise; the returned score is
/// -body(x / sqrt(m^2 + v^2), F, t) / v with (m, v) the forward marginal at
/// t, which keeps the body's output O(1) across noise levels.
class ScoreNetwork {
 public:
  ScoreNetwork() = default;
  ScoreNetwork(ScoreNetworkConfig config, SdeSpec sde, RngStream& init);

  const ScoreNetworkConfig& config() const noexcept { return config_; }
  const SdeSpec& sde() const noexcept { return sde_; }

  /// [sin(2 pi f t), cos(2 pi f t)] for the frozen frequencies f (2K values).
  Tensor embed_time(double t) const;

  BlockOutput block_forward(Tape& tape, std::size_t block, const Var& hidden, const Var& cond,
                            const Var& temb) const;

  /// Noise-prediction body; x (batch, D), features (batch, H), one time per row.
  Var body(Tape& tape, const Var& x, const Var& features, std::span<const double> times) const;

  /// Score estimate (batch, D).
  Var forward(Tape& tape, const Var& x, const Var& features,
              std::span<const double> times) const;
  Tensor score(const Tensor& x, const Tensor& features, std::span<const double> times) const;

  /// Trainable parameters.
  std::vector<Parameter*> parameters();
  /// Frozen tensors that are serialized with the parameters but never trained.
  std::vector<Parameter*> buffers();

 private:
  void check_inputs(const Var& x, const Var& features, std::span<const double> times) const;

  ScoreNetworkConfig config_;
  SdeSpec sde_ = SdeSpec::vp();

  Parameter fourier_frequencies_;  // (K), frozen
  Parameter time_embed_weight_;    // (2K, C)
  Parameter time_embed_bias_;      // (C)
  Parameter cond_weight1_;         // (H, D)
  Parameter cond_bias1_;           // (D)
  Parameter cond_weight2_;         // (D, D)
  Parameter cond_bias2_;           // (D)
  Parameter stem_kernel1_;         // (C, 1, 1)
  Parameter stem_bias1_;           // (C)
  Parameter stem_kernel3_;         // (C, C, 3)
  Parameter stem_bias3_;           // (C)
  std::vector<ResidualBlockParams> blocks_;
  Parameter head_kernel1_;         // (C, C, 1)
  Parameter head_bias1_;           // (C)
  Parameter head_kernel2_;         // (1, C, 1), zero-initialized
  Parameter head_bias2_;           // (1)
  Parameter linear_gain_weight_;   // (C, 1), zero-initialized
  Parameter linear_gain_bias_;     // (1)
};

}  // namespace scoregrad
