#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scoregrad/autodiff.hpp"
#include "scoregrad/rng.hpp"

namespace scoregrad {

struct RnnConfig {
  /// Width of one update input: target dimension D plus covariate width.
  std::size_t input_width = 0;
  std::size_t hidden = 40;
  std::size_t layers = 2;

  nlohmann::json to_json() const;
  static RnnConfig from_json(const nlohmann::json& j);
};

/// Recurrent hidden vectors of every layer, one row per independent sequence.
/// Each tensor is (batch, hidden).
struct FeatureState {
  std::vector<Tensor> layers;

  /// Top-layer hidden state: the conditioner handed to the score network.
  const Tensor& output() const { return layers.back(); }
  std::size_t batch() const { return layers.empty() ? 0 : layers.front().dim(0); }
};

/// FeatureState bound to a tape.
struct TracedFeatureState {
  std::vector<Var> layers;

  const Var& output() const { return layers.back(); }
  FeatureState snapshot() const;
};

/// One gated recurrent layer:
///   r = sigmoid(x Wr + h Ur + b), u = sigmoid(x Wu + h Uu + b)
///   n = tanh(x Wn + b + r * (h Un + b')),  h' = (1 - u) * n + u * h
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(std::string prefix, std::size_t input, std::size_t hidden, RngStream& init);

  Var step(Tape& tape, const Var& x, const Var& h) const;
  std::size_t hidden() const noexcept { return hidden_; }

  void collect(std::vector<Parameter*>& out);

 private:
  std::size_t hidden_ = 0;
  Parameter w_input_;   // (input, 3H) gates ordered reset | update | candidate
  Parameter w_hidden_;  // (H, 3H)
  Parameter b_input_;   // (3H)
  Parameter b_hidden_;  // (3H)
};

/// Stacked GRU maintaining the feature state F_t = R(F_{t-1}, x_{t-1}, c_{t-1}).
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(RnnConfig config, RngStream& init);

  const RnnConfig& config() const noexcept { return config_; }
  std::size_t width() const noexcept { return config_.hidden; }

  FeatureState init_state(std::size_t batch = 1) const;
  TracedFeatureState trace(Tape& tape, const FeatureState& state) const;

  /// x_prev (batch, D) is already scaled; c_prev is (batch, covariate width).
  TracedFeatureState update(Tape& tape, const TracedFeatureState& state, const Var& x_prev,
                            const Var& c_prev) const;
  FeatureState update(const FeatureState& state, const Tensor& x_prev,
                      const Tensor& c_prev) const;

  /// Folds `update` over the window starting from the zero state.
  /// Element t is the state after consuming inputs 0..t, so it depends only
  /// on inputs strictly before the target it conditions.
  std::vector<TracedFeatureState> encode_context(Tape& tape, std::span<const Tensor> x_prev,
                                                 std::span<const Tensor> c_prev) const;

  std::vector<Parameter*> parameters();

 private:
  RnnConfig config_;
  std::vector<GruLayer> layers_;
};

}  // namespace scoregrad
