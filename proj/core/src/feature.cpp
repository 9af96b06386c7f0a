#include "scoregrad/feature.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"

namespace scoregrad {

nlohmann::json RnnConfig::to_json() const {
  return {{"input_width", input_width}, {"hidden", hidden}, {"layers", layers}};
}

RnnConfig RnnConfig::from_json(const nlohmann::json& j) {
  RnnConfig c;
  c.input_width = j.at("input_width").get<std::size_t>();
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  return c;
}

FeatureState TracedFeatureState::snapshot() const {
  FeatureState s;
  for (const Var& v : layers) s.layers.push_back(v.value());
  return s;
}

GruLayer::GruLayer(std::string prefix, std::size_t input, std::size_t hidden, RngStream& init)
    : hidden_(hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_input_ = Parameter(prefix + ".w_input", init.uniform({input, 3 * hidden}, -bound, bound));
  w_hidden_ = Parameter(prefix + ".w_hidden", init.uniform({hidden, 3 * hidden}, -bound, bound));
  b_input_ = Parameter(prefix + ".b_input", init.uniform({3 * hidden}, -bound, bound));
  b_hidden_ = Parameter(prefix + ".b_hidden", init.uniform({3 * hidden}, -bound, bound));
}

Var GruLayer::step(Tape& tape, const Var& x, const Var& h) const {
  const std::size_t H = hidden_;
  if (h.shape().size() != 2 || h.shape()[1] != H || x.shape().size() != 2 ||
      x.shape()[0] != h.shape()[0] || x.shape()[1] != w_input_.shape()[0]) {
    throw ShapeError("gru: input " + to_string(x.shape()) + " / state " + to_string(h.shape()) +
                     " do not match layer (" + std::to_string(w_input_.shape()[0]) + " -> " +
                     std::to_string(H) + ")");
  }
  Var gx = ops::add_bias(ops::matmul(x, tape.parameter(w_input_)), tape.parameter(b_input_));
  Var gh = ops::add_bias(ops::matmul(h, tape.parameter(w_hidden_)), tape.parameter(b_hidden_));
  Var reset = ops::sigmoid(ops::add(ops::slice(gx, 1, 0, H), ops::slice(gh, 1, 0, H)));
  Var update = ops::sigmoid(ops::add(ops::slice(gx, 1, H, 2 * H), ops::slice(gh, 1, H, 2 * H)));
  Var candidate = ops::tanh(
      ops::add(ops::slice(gx, 1, 2 * H, 3 * H), ops::mul(reset, ops::slice(gh, 1, 2 * H, 3 * H))));
  // h' = n + u * (h - n)
  return ops::add(candidate, ops::mul(update, ops::sub(h, candidate)));
}

void GruLayer::collect(std::vector<Parameter*>& out) {
  out.insert(out.end(), {&w_input_, &w_hidden_, &b_input_, &b_hidden_});
}

FeatureExtractor::FeatureExtractor(RnnConfig config, RngStream& init) : config_(config) {
  if (config_.layers == 0 || config_.hidden == 0 || config_.input_width == 0) {
    throw ConfigError("rnn: layers, hidden and input_width must be positive");
  }
  for (std::size_t i = 0; i < config_.layers; ++i) {
    layers_.emplace_back("rnn.layer" + std::to_string(i),
                         i == 0 ? config_.input_width : config_.hidden, config_.hidden, init);
  }
}

FeatureState FeatureExtractor::init_state(std::size_t batch) const {
  FeatureState s;
  s.layers.assign(config_.layers, Tensor({batch, config_.hidden}));
  return s;
}

TracedFeatureState FeatureExtractor::trace(Tape& tape, const FeatureState& state) const {
  if (state.layers.size() != layers_.size()) {
    throw ShapeError("rnn: state has " + std::to_string(state.layers.size()) +
                     " layers, expected " + std::to_string(layers_.size()));
  }
  TracedFeatureState out;
  for (const Tensor& t : state.layers) out.layers.push_back(tape.constant(t));
  return out;
}

TracedFeatureState FeatureExtractor::update(Tape& tape, const TracedFeatureState& state,
                                            const Var& x_prev, const Var& c_prev) const {
  if (state.layers.size() != layers_.size()) {
    throw ShapeError("rnn: state layer count mismatch");
  }
  const std::size_t width = x_prev.shape().at(1) + c_prev.shape().at(1);
  if (width != config_.input_width) {
    throw ShapeError("rnn: input width " + std::to_string(width) + " (target " +
                     to_string(x_prev.shape()) + " + covariates " + to_string(c_prev.shape()) +
                     ") does not match configured " + std::to_string(config_.input_width));
  }
  const Var parts[] = {x_prev, c_prev};
  Var input = ops::concat(parts, 1);
  TracedFeatureState next;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    input = layers_[i].step(tape, input, state.layers[i]);
    next.layers.push_back(input);
  }
  return next;
}

FeatureState FeatureExtractor::update(const FeatureState& state, const Tensor& x_prev,
                                      const Tensor& c_prev) const {
  Tape tape(GradMode::kInference);
  return update(tape, trace(tape, state), tape.constant(x_prev), tape.constant(c_prev))
      .snapshot();
}

std::vector<TracedFeatureState> FeatureExtractor::encode_context(
    Tape& tape, std::span<const Tensor> x_prev, std::span<const Tensor> c_prev) const {
  if (x_prev.empty()) throw DataError("encode_context: empty window");
  if (x_prev.size() != c_prev.size()) {
    throw ShapeError("encode_context: " + std::to_string(x_prev.size()) + " targets vs " +
                     std::to_string(c_prev.size()) + " covariate rows");
  }
  std::vector<TracedFeatureState> states;
  states.reserve(x_prev.size());
  TracedFeatureState state = trace(tape, init_state(x_prev[0].dim(0)));
  for (std::size_t t = 0; t < x_prev.size(); ++t) {
    state = update(tape, state, tape.constant(x_prev[t]), tape.constant(c_prev[t]));
    states.push_back(state);
  }
  return states;
}

std::vector<Parameter*> FeatureExtractor::parameters() {
  std::vector<Parameter*> out;
  for (GruLayer& l : layers_) l.collect(out);
  return out;
}

}  // namespace scoregrad
