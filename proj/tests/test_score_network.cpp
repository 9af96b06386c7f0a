#include <gtest/gtest.h>

#include <cmath>

#include "scoregrad/errors.hpp"
#include "scoregrad/feature.hpp"
#include "scoregrad/grad_check.hpp"
#include "scoregrad/score_network.hpp"

using namespace scoregrad;

namespace {

ScoreNetwork make_network(std::size_t dims, std::size_t features, std::uint64_t seed,
                          SdeSpec sde = SdeSpec::vp(), std::size_t channels = 8) {
  ScoreNetworkConfig c;
  c.target_dim = dims;
  c.feature_width = features;
  c.channels = channels;
  RngStream init(seed);
  return ScoreNetwork(c, sde, init);
}

// Head weights start at zero; randomize them so the output depends on the input.
void randomize_all(ScoreNetwork& net, std::uint64_t seed) {
  RngStream rng(seed);
  for (Parameter* p : net.parameters()) {
    for (double& v : p->value().data()) v = 0.5 * rng.normal();
  }
}

}  // namespace

TEST(ScoreNetwork, TimeEmbeddingAtZeroAndBounded) {
  const ScoreNetwork net = make_network(2, 4, 1);
  const Tensor e0 = net.embed_time(0.0);
  ASSERT_EQ(e0.size(), 128u);
  for (std::size_t k = 0; k < 64; ++k) {
    EXPECT_EQ(e0[k], 0.0);
    EXPECT_EQ(e0[64 + k], 1.0);
  }
  for (double t : {0.01, 0.3, 0.77, 1.0}) {
    const Tensor e = net.embed_time(t);
    for (double v : e.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(ScoreNetwork, TimeEmbeddingLipschitz) {
  ScoreNetwork net = make_network(2, 4, 2);
  const Tensor freqs = net.buffers().front()->value();
  double fnorm = 0.0;
  for (double f : freqs.data()) fnorm += f * f;
  fnorm = std::sqrt(fnorm);
  const Tensor a = net.embed_time(0.4), b = net.embed_time(0.4 + 1e-6);
  double dist = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_LT(std::sqrt(dist), 1e-3 * fnorm);
}

TEST(ScoreNetwork, ZeroWeightBlock) {
  ScoreNetwork net = make_network(5, 3, 3);
  for (Parameter* p : net.parameters()) {
    if (p->name().rfind("block2.", 0) == 0) p->value().fill(0.0);
  }
  RngStream rng(4);
  Tape tape(GradMode::kInference);
  const Tensor hidden = rng.normal({2, 8, 5});
  const BlockOutput out = net.block_forward(tape, 2, tape.constant(hidden),
                                            tape.constant(rng.normal({2, 1, 5})),
                                            tape.constant(rng.normal({2, 8})));
  EXPECT_EQ(out.residual.shape(), hidden.shape());
  EXPECT_EQ(out.skip.shape(), hidden.shape());
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    EXPECT_NEAR(out.residual.value()[i], hidden[i] / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(out.skip.value()[i], 0.0);
  }
}

TEST(ScoreNetwork, BlockGradientCheck) {
  ScoreNetwork net = make_network(4, 3, 5);
  RngStream rng(6);
  const Tensor cond = rng.normal({2, 1, 4}), temb = rng.normal({2, 8});
  const double err = grad_check(
      [&](Tape& tape, const Var& h) {
        const BlockOutput out = net.block_forward(tape, 1, h, tape.constant(cond),
                                                  tape.constant(temb));
        return ops::add(out.residual, ops::tanh(out.skip));
      },
      rng.normal({2, 8, 4}));
  EXPECT_LT(err, 1e-4);
}

TEST(ScoreNetwork, ShapePreservation) {
  for (std::size_t D : {1, 2, 8, 37}) {
    const ScoreNetwork net = make_network(D, 6, 7);
    RngStream rng(D);
    const std::vector<double> times = {0.1, 0.9, 0.5};
    const Tensor s = net.score(rng.normal({3, D}), rng.normal({3, 6}), times);
    EXPECT_EQ(s.shape(), (Shape{3, D}));
    EXPECT_TRUE(s.all_finite());
  }
}

TEST(ScoreNetwork, DeterministicUnderSeed) {
  const ScoreNetwork a = make_network(3, 4, 8), b = make_network(3, 4, 8);
  RngStream rng(9);
  const Tensor x = rng.normal({2, 3}), f = rng.normal({2, 4});
  const std::vector<double> t = {0.3, 0.6};
  EXPECT_EQ(a.score(x, f, t), b.score(x, f, t));
}

TEST(ScoreNetwork, ConditioningChangesOutput) {
  ScoreNetwork net = make_network(4, 5, 10);
  randomize_all(net, 11);
  RngStream rng(12);
  const Tensor x = rng.normal({1, 4});
  const std::vector<double> t = {0.4};
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor s1 = net.score(x, rng.normal({1, 5}), t);
    const Tensor s2 = net.score(x, rng.normal({1, 5}), t);
    double diff = 0.0;
    for (std::size_t i = 0; i < 4; ++i) diff += std::abs(s1[i] - s2[i]);
    EXPECT_GT(diff, 0.0);
  }
}

TEST(ScoreNetwork, FiniteForLargeInputs) {
  for (const SdeSpec& sde : {SdeSpec::vp(), SdeSpec::ve(), SdeSpec::sub_vp()}) {
    ScoreNetwork net = make_network(3, 4, 13, sde);
    randomize_all(net, 14);
    RngStream rng(15);
    Tensor x = rng.normal({4, 3});
    for (double& v : x.data()) v *= 1e3;
    const std::vector<double> t = {1e-5, 0.2, 0.7, 1.0};
    EXPECT_TRUE(net.score(x, rng.normal({4, 4}), t).all_finite()) << to_string(sde.kind());
  }
}

TEST(ScoreNetwork, FreshNetworkOutputsZero) {
  const ScoreNetwork net = make_network(3, 4, 17);
  RngStream rng(18);
  const std::vector<double> t = {0.05, 0.5, 1.0};
  const Tensor s = net.score(rng.normal({3, 3}), rng.normal({3, 4}), t);
  for (double v : s.data()) EXPECT_EQ(v, 0.0);
}

// With the gated head at zero only the linear path remains:
// score = -gain * x / (sqrt(m^2 + std^2) * std).
TEST(ScoreNetwork, LinearPathMatchesClosedForm) {
  for (const SdeSpec& sde : {SdeSpec::vp(), SdeSpec::ve(), SdeSpec::sub_vp()}) {
    ScoreNetwork net = make_network(2, 4, 19, sde);
    const double gain = 0.75;
    for (Parameter* p : net.parameters()) {
      if (p->name() == "linear_gain.bias") p->value().fill(gain);
    }
    RngStream rng(20);
    Tensor x = rng.normal({3, 2});
    for (double& v : x.data()) v *= 50.0;
    const std::vector<double> t = {0.01, 0.4, 1.0};
    const Tensor s = net.score(x, rng.normal({3, 4}), t);
    for (std::size_t b = 0; b < 3; ++b) {
      const MarginalParams m = sde.marginal(t[b]);
      const double c = 1.0 / std::sqrt(m.mean_coeff * m.mean_coeff + m.std * m.std);
      for (std::size_t d = 0; d < 2; ++d) {
        const double expected = -gain * c * x[b * 2 + d] / m.std;
        EXPECT_NEAR(s[b * 2 + d], expected, 1e-12 * std::abs(expected)) << to_string(sde.kind());
      }
    }
  }
}

TEST(ScoreNetwork, RejectsBadInputs) {
  const ScoreNetwork net = make_network(3, 4, 16);
  const std::vector<double> t1 = {0.5};
  EXPECT_THROW(net.score(Tensor({1, 2}), Tensor({1, 4}), t1), ShapeError);
  EXPECT_THROW(net.score(Tensor({1, 3}), Tensor({1, 5}), t1), ShapeError);
  const std::vector<double> bad = {1.5};
  EXPECT_THROW(net.score(Tensor({1, 3}), Tensor({1, 4}), bad), RangeError);
}

TEST(ScoreNetwork, FullNetworkGradientCheck) {
  for (const SdeSpec& sde : {SdeSpec::vp(), SdeSpec::ve()}) {
    ScoreNetwork net = make_network(3, 4, 17, sde, 4);
    randomize_all(net, 18);
    RngStream rng(19);
    const Tensor x = rng.normal({2, 3}), f = rng.normal({2, 4});
    const std::vector<double> t = {0.25, 0.8};
    const auto params = net.parameters();
    const double err = grad_check_parameters(
        [&](Tape& tape) { return net.forward(tape, tape.constant(x), tape.constant(f), t); },
        params);
    EXPECT_LT(err, 1e-4) << to_string(sde.kind());
    EXPECT_LT(grad_check([&](Tape& tape, const Var& xv) {
                return net.forward(tape, xv, tape.constant(f), t);
              }, x),
              1e-4);
  }
}

TEST(ScoreNetwork, RnnCompositeGradientCheck) {
  RngStream init(20);
  FeatureExtractor fx(RnnConfig{4, 6, 2}, init);
  ScoreNetwork net = make_network(2, 6, 21, SdeSpec::vp(), 4);
  randomize_all(net, 22);
  RngStream rng(23);
  std::vector<Tensor> xs, cs;
  for (int t = 0; t < 3; ++t) {
    xs.push_back(rng.normal({2, 2}));
    cs.push_back(rng.normal({2, 2}));
  }
  const Tensor noisy = rng.normal({2, 2});
  const std::vector<double> times = {0.3, 0.6};
  std::vector<Parameter*> params = fx.parameters();
  for (Parameter* p : net.parameters()) params.push_back(p);
  const double err = grad_check_parameters(
      [&](Tape& tape) {
        const auto states = fx.encode_context(tape, xs, cs);
        return net.forward(tape, tape.constant(noisy), states.back().output(), times);
      },
      params);
  EXPECT_LT(err, 1e-4);
}
