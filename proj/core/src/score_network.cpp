#include "scoregrad/score_network.hpp"

#include <cmath>
#include <numbers>
#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"

namespace scoregrad {

nlohmann::json ScoreNetworkConfig::to_json() const {
  return {{"target_dim", target_dim},         {"feature_width", feature_width},
          {"channels", channels},             {"blocks", blocks},
          {"fourier_features", fourier_features}, {"fourier_scale", fourier_scale}};
}

ScoreNetworkConfig ScoreNetworkConfig::from_json(const nlohmann::json& j) {
  ScoreNetworkConfig c;
  c.target_dim = j.at("target_dim").get<std::size_t>();
  c.feature_width = j.at("feature_width").get<std::size_t>();
  c.channels = j.value("channels", c.channels);
  c.blocks = j.value("blocks", c.blocks);
  c.fourier_features = j.value("fourier_features", c.fourier_features);
  c.fourier_scale = j.value("fourier_scale", c.fourier_scale);
  return c;
}

namespace {

Parameter uniform_param(std::string name, Shape shape, std::size_t fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Parameter(std::move(name), rng.uniform(std::move(shape), -bound, bound));
}

Parameter zero_param(std::string name, Shape shape) {
  return Parameter(std::move(name), Tensor(std::move(shape)));
}

Var conv(Tape& tape, const Var& x, const Parameter& kernel, const Parameter& bias,
         std::size_t dilation = 1) {
  return ops::conv1d(x, tape.parameter(kernel), tape.parameter(bias), dilation);
}

Var linear(Tape& tape, const Var& x, const Parameter& weight, const Parameter& bias) {
  return ops::add_bias(ops::matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

}  // namespace

ScoreNetwork::ScoreNetwork(ScoreNetworkConfig config, SdeSpec sde, RngStream& init)
    : config_(config), sde_(sde) {
  const std::size_t C = config_.channels, D = config_.target_dim, H = config_.feature_width;
  const std::size_t K = config_.fourier_features;
  if (C == 0 || D == 0 || H == 0 || K == 0 || config_.blocks == 0) {
    throw ConfigError("score network: channels, target_dim, feature_width, "
                      "fourier_features and blocks must be positive");
  }
  Tensor freqs = init.normal({K});
  for (double& f : freqs.data()) f *= config_.fourier_scale;
  fourier_frequencies_ = Parameter("time_embed.frequencies", std::move(freqs));
  time_embed_weight_ = uniform_param("time_embed.weight", {2 * K, C}, 2 * K, init);
  time_embed_bias_ = zero_param("time_embed.bias", {C});
  cond_weight1_ = uniform_param("cond.weight1", {H, D}, H, init);
  cond_bias1_ = zero_param("cond.bias1", {D});
  cond_weight2_ = uniform_param("cond.weight2", {D, D}, D, init);
  cond_bias2_ = zero_param("cond.bias2", {D});
  stem_kernel1_ = uniform_param("stem.kernel1", {C, 1, 1}, 1, init);
  stem_bias1_ = zero_param("stem.bias1", {C});
  stem_kernel3_ = uniform_param("stem.kernel3", {C, C, 3}, 3 * C, init);
  stem_bias3_ = zero_param("stem.bias3", {C});
  for (std::size_t i = 0; i < config_.blocks; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    blocks_.push_back(ResidualBlockParams{
        uniform_param(p + "time_proj", {C, C}, C, init),
        zero_param(p + "time_bias", {C}),
        uniform_param(p + "dilated_kernel", {2 * C, C, 3}, 3 * C, init),
        zero_param(p + "dilated_bias", {2 * C}),
        uniform_param(p + "cond_kernel", {2 * C, 1, 1}, 1, init),
        zero_param(p + "cond_bias", {2 * C}),
        uniform_param(p + "out_kernel", {2 * C, C, 1}, C, init),
        zero_param(p + "out_bias", {2 * C}),
    });
  }
  head_kernel1_ = uniform_param("head.kernel1", {C, C, 1}, C, init);
  head_bias1_ = zero_param("head.bias1", {C});
  head_kernel2_ = zero_param("head.kernel2", {1, C, 1});
  head_bias2_ = zero_param("head.bias2", {1});
  linear_gain_weight_ = zero_param("linear_gain.weight", {C, 1});
  linear_gain_bias_ = zero_param("linear_gain.bias", {1});
}

Tensor ScoreNetwork::embed_time(double t) const {
  const auto freqs = fourier_frequencies_.value().data();
  const std::size_t K = freqs.size();
  Tensor out({2 * K});
  for (std::size_t k = 0; k < K; ++k) {
    const double angle = 2.0 * std::numbers::pi * freqs[k] * t;
    out[k] = std::sin(angle);
    out[K + k] = std::cos(angle);
  }
  return out;
}

BlockOutput ScoreNetwork::block_forward(Tape& tape, std::size_t block, const Var& hidden,
                                        const Var& cond, const Var& temb) const {
  const ResidualBlockParams& p = blocks_.at(block);
  const std::size_t C = config_.channels;
  const Shape& hs = hidden.shape();
  if (hs.size() != 3 || hs[1] != C || cond.shape() != Shape{hs[0], 1, hs[2]} ||
      temb.shape() != Shape{hs[0], C}) {
    throw ShapeError("block_forward: hidden " + to_string(hs) + ", cond " +
                     to_string(cond.shape()) + ", temb " + to_string(temb.shape()) +
                     " inconsistent with C=" + std::to_string(C));
  }
  const std::size_t len = hs[2];
  Var t = ops::expand_last(linear(tape, temb, p.time_proj, p.time_bias), len);
  Var h = conv(tape, ops::add(hidden, t), p.dilated_kernel, p.dilated_bias, config_.dilation(block));
  h = ops::add(h, conv(tape, cond, p.cond_kernel, p.cond_bias));
  Var gate = ops::mul(ops::tanh(ops::slice(h, 1, 0, C)), ops::sigmoid(ops::slice(h, 1, C, 2 * C)));
  Var out = conv(tape, gate, p.out_kernel, p.out_bias);
  Var residual = ops::scale(ops::add(hidden, ops::slice(out, 1, 0, C)), 1.0 / std::numbers::sqrt2);
  return {residual, ops::slice(out, 1, C, 2 * C)};
}

void ScoreNetwork::check_inputs(const Var& x, const Var& features,
                                std::span<const double> times) const {
  const Shape& xs = x.shape();
  if (xs.size() != 2 || xs[1] != config_.target_dim || features.shape().size() != 2 ||
      features.shape()[0] != xs[0] || features.shape()[1] != config_.feature_width ||
      times.size() != xs[0]) {
    throw ShapeError("score_forward: x " + to_string(xs) + ", features " +
                     to_string(features.shape()) + ", " + std::to_string(times.size()) +
                     " times; expected (B," + std::to_string(config_.target_dim) + "), (B," +
                     std::to_string(config_.feature_width) + ") and B times");
  }
  for (double t : times) {
    if (!(t > 0.0 && t <= sde_.horizon() * (1.0 + 1e-12))) {
      throw RangeError("score_forward: t_s=" + std::to_string(t) + " outside (0, T_s]");
    }
  }
}

Var ScoreNetwork::body(Tape& tape, const Var& x, const Var& features,
                       std::span<const double> times) const {
  check_inputs(x, features, times);
  const std::size_t B = x.shape()[0], D = config_.target_dim, C = config_.channels;
  const std::size_t K2 = 2 * config_.fourier_features;

  Tensor in_scale({B, D});
  Tensor embedding({B, K2});
  for (std::size_t b = 0; b < B; ++b) {
    const MarginalParams m = sde_.marginal(times[b]);
    const double c = 1.0 / std::sqrt(m.mean_coeff * m.mean_coeff + m.std * m.std);
    for (std::size_t d = 0; d < D; ++d) in_scale[b * D + d] = c;
    const Tensor e = embed_time(times[b]);
    std::copy(e.data().begin(), e.data().end(), embedding.data().begin() + b * K2);
  }

  Var temb = ops::softplus(linear(tape, tape.constant(std::move(embedding)), time_embed_weight_,
                                  time_embed_bias_));
  Var cond = linear(tape, ops::tanh(linear(tape, features, cond_weight1_, cond_bias1_)),
                    cond_weight2_, cond_bias2_);
  cond = ops::reshape(cond, {B, 1, D});

  Var scaled = ops::mul(x, tape.constant(std::move(in_scale)));
  Var h = ops::reshape(scaled, {B, 1, D});
  h = ops::tanh(conv(tape, h, stem_kernel1_, stem_bias1_));
  h = ops::tanh(conv(tape, h, stem_kernel3_, stem_bias3_));

  Var skip_total;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    BlockOutput out = block_forward(tape, i, h, cond, temb);
    h = out.residual;
    skip_total = i == 0 ? out.skip : ops::add(skip_total, out.skip);
  }
  skip_total = ops::scale(skip_total, 1.0 / std::sqrt(static_cast<double>(blocks_.size())));
  Var y = ops::tanh(conv(tape, skip_total, head_kernel1_, head_bias1_));
  y = conv(tape, y, head_kernel2_, head_bias2_);
  // The gated path is bounded; a time-dependent linear term in x lets the output
  // keep growing with |x| so the reverse drift cannot push tail samples away.
  Var gain = ops::reshape(linear(tape, temb, linear_gain_weight_, linear_gain_bias_), {B, 1});
  gain = ops::reshape(ops::expand_last(gain, D), {B, D});
  (void)C;
  return ops::add(ops::reshape(y, {B, D}), ops::mul(gain, scaled));
}

Var ScoreNetwork::forward(Tape& tape, const Var& x, const Var& features,
                          std::span<const double> times) const {
  Var eps = body(tape, x, features, times);
  const std::size_t B = x.shape()[0], D = config_.target_dim;
  Tensor out_scale({B, D});
  for (std::size_t b = 0; b < B; ++b) {
    const double s = -1.0 / sde_.marginal(times[b]).std;
    for (std::size_t d = 0; d < D; ++d) out_scale[b * D + d] = s;
  }
  return ops::mul(eps, tape.constant(std::move(out_scale)));
}

Tensor ScoreNetwork::score(const Tensor& x, const Tensor& features,
                           std::span<const double> times) const {
  Tape tape(GradMode::kInference);
  return forward(tape, tape.constant(x), tape.constant(features), times).value();
}

std::vector<Parameter*> ScoreNetwork::parameters() {
  std::vector<Parameter*> out{&time_embed_weight_, &time_embed_bias_, &cond_weight1_,
                              &cond_bias1_,        &cond_weight2_,    &cond_bias2_,
                              &stem_kernel1_,      &stem_bias1_,      &stem_kernel3_,
                              &stem_bias3_};
  for (ResidualBlockParams& b : blocks_) {
    out.insert(out.end(), {&b.time_proj, &b.time_bias, &b.dilated_kernel, &b.dilated_bias,
                           &b.cond_kernel, &b.cond_bias, &b.out_kernel, &b.out_bias});
  }
  out.insert(out.end(), {&head_kernel1_, &head_bias1_, &head_kernel2_, &head_bias2_,
                         &linear_gain_weight_, &linear_gain_bias_});
  return out;
}

std::vector<Parameter*> ScoreNetwork::buffers() { return {&fourier_frequencies_}; }

}  // namespace scoregrad
