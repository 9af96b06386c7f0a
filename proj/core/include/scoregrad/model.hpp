#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scoregrad/data.hpp"
#include "scoregrad/feature.hpp"
#include "scoregrad/score_network.hpp"
#include "scoregrad/sde.hpp"

namespace scoregrad {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batches_per_epoch = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double ema_rate = 0.999;
  double clip_norm = 10.0;
  /// Lower end of the diffusion-time draw t ~ U(t_min, T).
  double t_min = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Everything needed to rebuild a model: the SDE, data layout, both
/// sub-networks and the training schedule.
struct ModelConfig {
  SdeSpec sde = SdeSpec::vp();
  DatasetConfig dataset;
  std::size_t target_dim = 1;
  std::size_t hidden = 40;
  std::size_t rnn_layers = 2;
  std::size_t channels = 8;
  std::size_t blocks = 8;
  std::size_t fourier_features = 64;
  double fourier_scale = 16.0;
  TrainConfig train;

  std::size_t context_length() const noexcept { return dataset.prediction_length; }
  WindowSpec window() const noexcept {
    return {dataset.prediction_length, dataset.prediction_length, 1};
  }
  CovariateSpec covariates() const;
  RnnConfig rnn() const;
  ScoreNetworkConfig network() const;

  void validate() const;
  nlohmann::json to_json() const;
  /// `target_dim` may be omitted and supplied from the data instead.
  static ModelConfig from_json(const nlohmann::json& j, std::size_t target_dim = 0);
};

/// Feature extractor plus conditional score network.
class ScoreGradModel {
 public:
  ScoreGradModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  const FeatureExtractor& features() const noexcept { return features_; }
  const ScoreNetwork& network() const noexcept { return network_; }

  std::vector<Parameter*> parameters();
  /// Trainable parameters followed by frozen buffers, in a fixed order.
  std::vector<Parameter*> state();

 private:
  ModelConfig config_;
  FeatureExtractor features_;
  ScoreNetwork network_;
};

}  // namespace scoregrad
