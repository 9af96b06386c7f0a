#include "scoregrad/model.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"

namespace scoregrad {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (batches_per_epoch == 0) throw ConfigError("train: batches_per_epoch must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(ema_rate >= 0.0 && ema_rate < 1.0)) throw ConfigError("train: ema_rate must be in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
  if (!(t_min > 0.0 && t_min < 1.0)) throw ConfigError("train: t_min must be in (0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batches_per_epoch", batches_per_epoch},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"ema_rate", ema_rate},
          {"clip_norm", clip_norm},
          {"t_min", t_min},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.ema_rate = j.value("ema_rate", c.ema_rate);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.t_min = j.value("t_min", c.t_min);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

CovariateSpec ModelConfig::covariates() const {
  return {dataset.freq, dataset.lags, target_dim};
}

RnnConfig ModelConfig::rnn() const {
  return {target_dim + covariates().width(), hidden, rnn_layers};
}

ScoreNetworkConfig ModelConfig::network() const {
  ScoreNetworkConfig c;
  c.target_dim = target_dim;
  c.feature_width = hidden;
  c.channels = channels;
  c.blocks = blocks;
  c.fourier_features = fourier_features;
  c.fourier_scale = fourier_scale;
  return c;
}

void ModelConfig::validate() const {
  if (target_dim == 0) throw ConfigError("model: target_dim must be >= 1");
  if (dataset.prediction_length == 0) throw ConfigError("model: prediction_length must be >= 1");
  if (hidden == 0 || rnn_layers == 0) throw ConfigError("model: rnn hidden and layers must be >= 1");
  if (channels == 0 || blocks == 0 || fourier_features == 0) {
    throw ConfigError("model: channels, blocks and fourier_features must be >= 1");
  }
  train.validate();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"sde", sde.to_json()},
          {"dataset", dataset.to_json()},
          {"target_dim", target_dim},
          {"rnn", {{"hidden", hidden}, {"layers", rnn_layers}}},
          {"network",
           {{"channels", channels},
            {"blocks", blocks},
            {"fourier_features", fourier_features},
            {"fourier_scale", fourier_scale}}},
          {"train", train.to_json()}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j, std::size_t target_dim) {
  try {
    ModelConfig c;
    if (j.contains("sde")) c.sde = SdeSpec::from_json(j.at("sde"));
    c.dataset = DatasetConfig::from_json(j.at("dataset"));
    c.target_dim = j.value("target_dim", target_dim);
    if (target_dim != 0 && c.target_dim != target_dim) {
      throw ConfigError("model: config has target_dim " + std::to_string(c.target_dim) +
                        " but the data has " + std::to_string(target_dim) + " columns");
    }
    if (j.contains("rnn")) {
      const auto& r = j.at("rnn");
      c.hidden = r.value("hidden", c.hidden);
      c.rnn_layers = r.value("layers", c.rnn_layers);
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      c.channels = n.value("channels", c.channels);
      c.blocks = n.value("blocks", c.blocks);
      c.fourier_features = n.value("fourier_features", c.fourier_features);
      c.fourier_scale = n.value("fourier_scale", c.fourier_scale);
    }
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

ScoreGradModel::ScoreGradModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  RngStream root(seed);
  RngStream rnn_init = root.split(1);
  RngStream net_init = root.split(2);
  features_ = FeatureExtractor(config_.rnn(), rnn_init);
  network_ = ScoreNetwork(config_.network(), config_.sde, net_init);
}

std::vector<Parameter*> ScoreGradModel::parameters() {
  std::vector<Parameter*> out = features_.parameters();
  for (Parameter* p : network_.parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> ScoreGradModel::state() {
  std::vector<Parameter*> out = parameters();
  for (Parameter* p : network_.buffers()) out.push_back(p);
  return out;
}

}  // namespace scoregrad
