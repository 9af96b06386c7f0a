#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"
#include "scoregrad/optimizer.hpp"
#include "scoregrad/training.hpp"
#include "toy.hpp"

using namespace scoregrad;

namespace {

ScoreNetworkConfig small_network(std::size_t dims, std::size_t features) {
  ScoreNetworkConfig c;
  c.target_dim = dims;
  c.feature_width = features;
  c.channels = 4;
  c.blocks = 2;
  c.fourier_features = 8;
  return c;
}

ModelConfig toy_config(std::size_t dims, std::size_t prediction) {
  ModelConfig cfg;
  cfg.target_dim = dims;
  cfg.dataset.freq = Frequency::kHourly;
  cfg.dataset.prediction_length = prediction;
  cfg.dataset.lags = {1, 2};
  cfg.hidden = 6;
  cfg.channels = 4;
  cfg.blocks = 2;
  cfg.fourier_features = 8;
  cfg.train.epochs = 2;
  cfg.train.batches_per_epoch = 3;
  cfg.train.batch_size = 4;
  return cfg;
}

std::vector<double> epoch_losses(const std::string& log) {
  std::vector<double> out;
  std::istringstream in(log);
  for (std::string line; std::getline(in, line);) {
    out.push_back(nlohmann::json::parse(line).at("loss").get<double>());
  }
  return out;
}

}  // namespace

TEST(Loss, OracleScoreGivesZero) {
  const SdeSpec sde = SdeSpec::vp();
  RngStream rng(1);
  for (int k = 0; k < 20; ++k) {
    const Tensor x0 = rng.normal({3});
    const Tensor z = rng.normal({3});
    const double t = rng.uniform(1e-3, 1.0);
    const ScoreFn oracle = [&](const Tensor& x, double time) {
      return sde.score_target(z, time).reshaped(x.shape());
    };
    EXPECT_NEAR(loss_at(x0, oracle, sde, t, z), 0.0, 1e-24);
  }
}

TEST(Loss, ZeroScoreHasUnitExpectation) {
  const SdeSpec sde = SdeSpec::vp();
  const ScoreFn zero = [](const Tensor& x, double) { return Tensor(x.shape()); };
  RngStream rng(2);
  const Tensor x0 = Tensor::vector({0.3, -1.0, 2.0, 0.5});
  const int n = 10000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += loss_at_step(x0, zero, sde, rng).loss;
  // ||z||^2 / D has variance 2 / D.
  const double se = std::sqrt(2.0 / 4.0 / n);
  EXPECT_NEAR(sum / n, 1.0, 4.0 * se);
}

TEST(Loss, ArithmeticExample) {
  // VE at t=0 has std sigma_min = 0.5; score 2 and z = -1 give (0.5 * 2 - 1)^2 = 0.
  const SdeSpec sde = SdeSpec::ve(0.5, 50.0);
  const ScoreFn two = [](const Tensor& x, double) { return Tensor(x.shape(), 2.0); };
  EXPECT_EQ(loss_at(Tensor::vector({7.0}), two, sde, 0.0, Tensor::vector({-1.0})), 0.0);
  const ScoreFn one = [](const Tensor& x, double) { return Tensor(x.shape(), 1.0); };
  EXPECT_DOUBLE_EQ(loss_at(Tensor::vector({7.0}), one, sde, 0.0, Tensor::vector({-1.0})), 0.25);
}

TEST(Loss, NetworkLossMatchesScoreForm) {
  RngStream init(3);
  ScoreNetwork net(small_network(3, 2), SdeSpec::vp(), init);
  RngStream prng(4);
  for (Parameter* p : net.parameters()) {
    for (double& v : p->value().data()) v = 0.3 * prng.normal();
  }
  RngStream data_rng(5);
  const Tensor x0 = data_rng.normal({6, 3});
  const Tensor feats = data_rng.normal({6, 2});

  Tape tape(GradMode::kInference);
  RngStream rng(6);
  std::vector<double> times;
  const double loss =
      denoising_loss(tape, net, x0, tape.constant(feats), rng, 1e-5, &times).value().item();

  // Replay the draws: per row, t then D normals.
  RngStream replay(6);
  const SdeSpec sde = SdeSpec::vp();
  double manual = 0.0;
  for (std::size_t r = 0; r < 6; ++r) {
    const double t = replay.uniform(1e-5, 1.0);
    EXPECT_EQ(t, times[r]);
    const MarginalParams mp = sde.marginal(t);
    Tensor z({1, 3}), xt({1, 3}), f({1, 2});
    for (std::size_t d = 0; d < 3; ++d) {
      z[d] = replay.normal();
      xt[d] = mp.mean_coeff * x0.at(r, d) + mp.std * z[d];
    }
    f[0] = feats.at(r, 0);
    f[1] = feats.at(r, 1);
    const std::vector<double> tr = {t};
    const Tensor s = net.score(xt, f, tr);
    for (std::size_t d = 0; d < 3; ++d) {
      const double e = mp.std * s[d] + z[d];
      manual += e * e;
    }
  }
  EXPECT_NEAR(loss, manual / 18.0, 1e-12);
  EXPECT_TRUE(std::isfinite(loss));
}

TEST(Optimizer, EmaRates) {
  Parameter p("p", Tensor::vector({2.0, 2.0}));
  std::vector<Parameter*> params = {&p};
  std::vector<Tensor> ema = {Tensor::vector({0.0, 0.0})};
  ema_update(ema, params, 0.5);
  EXPECT_EQ(ema[0], Tensor::vector({1.0, 1.0}));
  ema_update(ema, params, 1.0);
  EXPECT_EQ(ema[0], Tensor::vector({1.0, 1.0}));
  ema_update(ema, params, 0.0);
  EXPECT_EQ(ema[0], p.value());
  std::vector<Tensor> wrong = {Tensor::vector({0.0})};
  EXPECT_THROW(ema_update(wrong, params, 0.5), ShapeError);
}

TEST(Optimizer, EmaWarmup) {
  EXPECT_DOUBLE_EQ(ema_warmup_rate(0.999, 0), 0.1);
  EXPECT_DOUBLE_EQ(ema_warmup_rate(0.999, 90), 0.91);
  EXPECT_DOUBLE_EQ(ema_warmup_rate(0.999, 100000), 0.999);
  EXPECT_DOUBLE_EQ(ema_warmup_rate(0.0, 5), 0.0);
}

TEST(Optimizer, ClipGradients) {
  Parameter p("p", Tensor::vector({0.0, 0.0}));
  p.grad()[0] = 30.0;
  p.grad()[1] = 40.0;
  std::vector<Parameter*> params = {&p};
  EXPECT_DOUBLE_EQ(clip_gradients(params, 10.0), 50.0);
  EXPECT_NEAR(gradient_norm(params), 10.0, 1e-12);
  EXPECT_NEAR(p.grad()[0], 6.0, 1e-12);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  Parameter p("p", Tensor::vector({1.0, -1.0}));
  Adam adam({&p}, {.learning_rate = 0.1});
  p.grad()[0] = 3.0;
  p.grad()[1] = -0.5;
  adam.step();
  EXPECT_NEAR(p.value()[0], 0.9, 1e-6);
  EXPECT_NEAR(p.value()[1], -0.9, 1e-6);
}

TEST(Training, WindowBatchIsJMajor) {
  const Dataset data = toy::noisy_sinusoids(40, 2, 0.1, 7);
  const ModelConfig cfg = toy_config(2, 4);
  const WindowSampler sampler(data, cfg.window(), cfg.covariates());
  const std::vector<TrainingWindow> windows = {sampler.window(sampler.earliest_start()),
                                               sampler.window(sampler.latest_start())};
  const WindowBatch batch = WindowBatch::stack(windows);
  ASSERT_EQ(batch.steps(), 7u);
  EXPECT_EQ(batch.batch(), 2u);
  EXPECT_EQ(batch.target[3].at(1, 0), windows[1].target.at(3, 0));
  EXPECT_EQ(batch.c_prev[6].shape(), (Shape{2, cfg.covariates().width()}));
}

TEST(Training, ZeroLearningRateLeavesParameters) {
  // 2P points plus one for the lag-1 history: exactly one window.
  const Dataset data = toy::noisy_sinusoids(17, 2, 0.1, 8);
  ModelConfig cfg = toy_config(2, 8);
  cfg.dataset.lags = {1};
  cfg.train.learning_rate = 0.0;
  cfg.train.epochs = 1;
  cfg.train.batches_per_epoch = 1;
  cfg.train.batch_size = 1;
  ScoreGradModel model(cfg, 9);
  auto params = model.parameters();
  const std::vector<Tensor> before = snapshot(params);
  const TrainResult result = train(model, data, {.train_end = data.length()});
  EXPECT_TRUE(snapshot(params) == before);
  // a * p + (1 - a) * p can differ from p in the last bit.
  ASSERT_EQ(result.ema.size(), before.size());
  for (std::size_t k = 0; k < before.size(); ++k) {
    for (std::size_t i = 0; i < before[k].size(); ++i) {
      ASSERT_NEAR(result.ema[k][i], before[k][i], 1e-15 * (1.0 + std::abs(before[k][i])));
    }
  }
  ASSERT_EQ(result.history.size(), 1u);
  EXPECT_TRUE(std::isfinite(result.history[0].loss));
}

TEST(Training, DeterministicUnderSeed) {
  const Dataset data = toy::noisy_sinusoids(80, 2, 0.2, 10);
  const ModelConfig cfg = toy_config(2, 6);
  ScoreGradModel a(cfg, 11), b(cfg, 11);
  const TrainResult ra = train(a, data), rb = train(b, data);
  auto pa = a.parameters();
  auto pb = b.parameters();
  EXPECT_EQ(snapshot(pa), snapshot(pb));
  EXPECT_EQ(ra.ema, rb.ema);
  ASSERT_EQ(ra.history.size(), 2u);
  EXPECT_EQ(ra.history[1].loss, rb.history[1].loss);
}

TEST(Training, LogLinesAreJson) {
  const Dataset data = toy::noisy_sinusoids(80, 2, 0.2, 12);
  ModelConfig cfg = toy_config(2, 6);
  cfg.sde = SdeSpec::sub_vp();
  ScoreGradModel model(cfg, 13);
  std::ostringstream log;
  const TrainResult result = train(model, data, {.log = &log});
  const std::vector<double> losses = epoch_losses(log.str());
  ASSERT_EQ(losses.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(losses[e], result.history[e].loss);
    EXPECT_TRUE(std::isfinite(losses[e]));
  }
}

TEST(Training, RejectsMismatchedData) {
  const Dataset data = toy::noisy_sinusoids(80, 3, 0.2, 14);
  ScoreGradModel model(toy_config(2, 6), 15);
  EXPECT_THROW(train(model, data), DataError);
}

TEST(Training, UnconditionalLossDecreases) {
  RngStream init(16);
  ScoreNetwork net(small_network(1, 1), SdeSpec::vp(), init);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.batches_per_epoch = 50;
  tc.seed = 17;
  std::ostringstream log;
  const auto draw = [](RngStream& rng, std::size_t rows) {
    Tensor x = rng.normal({rows, 1});
    for (double& v : x.data()) v = 1.0 + 0.5 * v;
    return x;
  };
  const std::vector<Tensor> ema = train_unconditional(net, draw, tc, 200, &log);
  const std::vector<double> losses = epoch_losses(log.str());
  ASSERT_EQ(losses.size(), 4u);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_EQ(ema.size(), net.parameters().size());
}
