#include <gtest/gtest.h>

#include <cmath>

#include "scoregrad/errors.hpp"
#include "scoregrad/feature.hpp"
#include "scoregrad/grad_check.hpp"

using namespace scoregrad;

namespace {

FeatureExtractor make_extractor(std::size_t input, std::size_t hidden, std::uint64_t seed) {
  RngStream init(seed);
  return FeatureExtractor(RnnConfig{input, hidden, 2}, init);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Feature, InitStateIsZero) {
  const FeatureExtractor fx = make_extractor(5, 40, 1);
  const FeatureState s = fx.init_state();
  ASSERT_EQ(s.layers.size(), 2u);
  for (const Tensor& layer : s.layers) {
    EXPECT_EQ(layer.shape(), (Shape{1, 40}));
    for (double v : layer.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Feature, ZeroWeightsGiveZeroOutput) {
  FeatureExtractor fx = make_extractor(3, 6, 2);
  for (Parameter* p : fx.parameters()) p->value().fill(0.0);
  RngStream rng(3);
  const FeatureState s = fx.update(fx.init_state(4), rng.normal({4, 1}), rng.normal({4, 2}));
  for (const Tensor& layer : s.layers) {
    for (double v : layer.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Feature, OutputsBoundedAndDeterministic) {
  const FeatureExtractor fx = make_extractor(4, 8, 5);
  RngStream rng(6);
  FeatureState s = fx.init_state(3);
  for (int t = 0; t < 20; ++t) {
    s = fx.update(s, rng.normal({3, 2}) , rng.normal({3, 2}));
    for (const Tensor& layer : s.layers) {
      EXPECT_EQ(layer.shape(), (Shape{3, 8}));
      for (double v : layer.data()) {
        EXPECT_GT(v, -1.0);
        EXPECT_LT(v, 1.0);
      }
    }
  }
  const Tensor x({1, 2}), c({1, 2});
  EXPECT_EQ(fx.update(fx.init_state(), x, c).output(), fx.update(fx.init_state(), x, c).output());
}

TEST(Feature, WidthMismatch) {
  const FeatureExtractor fx = make_extractor(4, 8, 5);
  EXPECT_THROW(fx.update(fx.init_state(), Tensor({1, 2}), Tensor({1, 3})), ShapeError);
  Tape tape;
  EXPECT_THROW(fx.encode_context(tape, {}, {}), DataError);
}

TEST(Feature, GradientMatchesFiniteDifferences) {
  FeatureExtractor fx = make_extractor(3, 5, 7);
  RngStream rng(8);
  std::vector<Tensor> xs, cs;
  for (int t = 0; t < 4; ++t) {
    xs.push_back(rng.normal({2, 1}));
    cs.push_back(rng.normal({2, 2}));
  }
  const auto params = fx.parameters();
  const double err = grad_check_parameters(
      [&](Tape& tape) {
        const auto states = fx.encode_context(tape, xs, cs);
        return ops::sum(ops::square_norm(states.back().output()));
      },
      params);
  EXPECT_LT(err, 1e-4);
}

TEST(Feature, EncodeContextPrefixAndLengthOne) {
  const FeatureExtractor fx = make_extractor(3, 6, 9);
  RngStream rng(10);
  std::vector<Tensor> xs, cs;
  for (int t = 0; t < 8; ++t) {
    xs.push_back(rng.normal({1, 1}));
    cs.push_back(rng.normal({1, 2}));
  }
  Tape full(GradMode::kInference);
  const auto states = fx.encode_context(full, xs, cs);
  ASSERT_EQ(states.size(), 8u);
  Tape one(GradMode::kInference);
  const auto first = fx.encode_context(one, std::span(xs).first(1), std::span(cs).first(1));
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(first[0].output().value(), fx.update(fx.init_state(), xs[0], cs[0]).output());
  for (std::size_t k = 1; k <= 8; ++k) {
    Tape prefix(GradMode::kInference);
    const auto part = fx.encode_context(prefix, std::span(xs).first(k), std::span(cs).first(k));
    for (std::size_t t = 0; t < k; ++t) {
      EXPECT_EQ(part[t].output().value(), states[t].output().value());
    }
  }
}

TEST(Feature, CausalityUnderPerturbation) {
  const FeatureExtractor fx = make_extractor(3, 6, 11);
  RngStream rng(12);
  std::vector<Tensor> xs, cs;
  for (int t = 0; t < 8; ++t) {
    xs.push_back(rng.normal({1, 1}));
    cs.push_back(rng.normal({1, 2}));
  }
  Tape base_tape(GradMode::kInference);
  const auto base = fx.encode_context(base_tape, xs, cs);
  // states[t] is the conditioner for target t + 1 and has consumed inputs 0..t.
  for (std::size_t j = 0; j < 8; ++j) {
    std::vector<Tensor> perturbed = xs;
    perturbed[j][0] += 0.5;
    Tape tape(GradMode::kInference);
    const auto states = fx.encode_context(tape, perturbed, cs);
    for (std::size_t t = 0; t < 8; ++t) {
      const double diff = max_abs_diff(states[t].output().value(), base[t].output().value());
      if (t < j) {
        EXPECT_EQ(diff, 0.0) << "input " << j << " leaked into state " << t;
      } else {
        EXPECT_GT(diff, 0.0) << "input " << j << " did not reach state " << t;
      }
    }
  }
}
