#include "scoregrad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>

#include "scoregrad/errors.hpp"
#include "scoregrad/optimizer.hpp"

namespace scoregrad {

double loss_at(const Tensor& x0, const ScoreFn& score, const SdeSpec& sde, double t,
               const Tensor& z) {
  const MarginalParams mp = sde.marginal(t);
  const std::size_t D = x0.size();
  const Tensor xt = sde.perturb(x0, t, z).reshaped({1, D});
  const Tensor s = score(xt, t);
  if (s.size() != D) throw ShapeError("loss_at_step: score has " + std::to_string(s.size()) +
                                      " values for dimension " + std::to_string(D));
  double acc = 0.0;
  for (std::size_t d = 0; d < D; ++d) {
    const double r = mp.std * s[d] + z[d];
    acc += r * r;
  }
  return acc / static_cast<double>(D);
}

LossTerm loss_at_step(const Tensor& x0, const ScoreFn& score, const SdeSpec& sde, RngStream& rng,
                      double t_min) {
  const double t = rng.uniform(t_min, sde.horizon());
  const Tensor z = rng.normal(x0.shape());
  return {loss_at(x0, score, sde, t, z), t};
}

Var denoising_loss(Tape& tape, const ScoreNetwork& network, const Tensor& x0, const Var& features,
                   RngStream& rng, double t_min, std::vector<double>* times) {
  const SdeSpec& sde = network.sde();
  if (x0.rank() != 2) throw ShapeError("denoising_loss: x0 must be (rows, D), got " +
                                       to_string(x0.shape()));
  const std::size_t rows = x0.dim(0), D = x0.dim(1);
  std::vector<double> t(rows);
  Tensor z({rows, D});
  Tensor xt({rows, D});
  for (std::size_t r = 0; r < rows; ++r) {
    t[r] = rng.uniform(t_min, sde.horizon());
    const MarginalParams mp = sde.marginal(t[r]);
    for (std::size_t d = 0; d < D; ++d) {
      const double noise = rng.normal();
      z.at(r, d) = noise;
      xt.at(r, d) = mp.mean_coeff * x0.at(r, d) + mp.std * noise;
    }
  }
  // std * s + z = z - body, since s = -body / std.
  const Var body = network.body(tape, tape.constant(std::move(xt)), features, t);
  const Var residual = ops::sub(body, tape.constant(std::move(z)));
  if (times) *times = std::move(t);
  return ops::scale(ops::square_norm(residual), 1.0 / static_cast<double>(rows * D));
}

WindowBatch WindowBatch::stack(std::span<const TrainingWindow> windows) {
  if (windows.empty()) throw DataError("window batch: no windows");
  const std::size_t B = windows.size();
  const std::size_t steps = windows.front().target.dim(0);
  auto gather = [&](auto member) {
    std::vector<Tensor> out;
    const std::size_t width = (windows.front().*member).dim(1);
    for (std::size_t j = 0; j < steps; ++j) {
      Tensor rows({B, width});
      for (std::size_t b = 0; b < B; ++b) {
        const Tensor& src = windows[b].*member;
        if (src.dim(0) != steps || src.dim(1) != width) {
          throw ShapeError("window batch: windows differ in shape");
        }
        for (std::size_t k = 0; k < width; ++k) rows.at(b, k) = src.at(j, k);
      }
      out.push_back(std::move(rows));
    }
    return out;
  };
  return {gather(&TrainingWindow::x_prev), gather(&TrainingWindow::c_prev),
          gather(&TrainingWindow::target)};
}

Var sequence_loss(Tape& tape, const ScoreGradModel& model, const WindowBatch& batch,
                  RngStream& rng, std::vector<double>* times) {
  const auto states = model.features().encode_context(tape, batch.x_prev, batch.c_prev);
  std::vector<Var> conditioners;
  conditioners.reserve(states.size());
  for (const auto& s : states) conditioners.push_back(s.output());
  const Var features = ops::concat(conditioners, 0);

  const std::size_t B = batch.batch(), D = batch.target.front().dim(1);
  Tensor x0({B * batch.steps(), D});
  for (std::size_t j = 0; j < batch.steps(); ++j) {
    std::copy_n(batch.target[j].data().begin(), B * D, x0.data().begin() + j * B * D);
  }
  return denoising_loss(tape, model.network(), x0, features, rng, model.config().train.t_min,
                        times);
}

std::vector<Tensor> snapshot(std::span<Parameter* const> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value());
  return out;
}

void assign(std::span<Parameter* const> params, std::span<const Tensor> values) {
  if (params.size() != values.size()) throw ShapeError("assign: parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != values[k].shape()) {
      throw ShapeError("assign: shape mismatch for " + params[k]->name() + ": " +
                       to_string(params[k]->shape()) + " vs " + to_string(values[k].shape()));
    }
    params[k]->value() = values[k];
  }
}

std::string format_epoch(const EpochRecord& record) {
  return nlohmann::json{{"epoch", record.epoch}, {"loss", record.loss}, {"wall_ms", record.wall_ms}}
      .dump();
}

namespace {

void check_loss(double loss, std::size_t epoch, std::size_t step, const std::vector<double>& t) {
  if (std::isfinite(loss)) return;
  double lo = t.empty() ? 0.0 : t.front(), hi = lo;
  for (double v : t) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  throw NumericalError("training: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                       std::to_string(step) + " (t_s drawn in [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "])");
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

TrainResult train(ScoreGradModel& model, const Dataset& data, const TrainOptions& options) {
  const ModelConfig& config = model.config();
  const TrainConfig& tc = config.train;
  tc.validate();
  if (data.dims() != config.target_dim) {
    throw DataError("train: data has " + std::to_string(data.dims()) + " columns, model expects " +
                    std::to_string(config.target_dim));
  }
  const WindowSampler sampler(data, config.window(), config.covariates(), options.train_end);
  std::vector<Parameter*> params = model.parameters();
  Adam adam(params, {.learning_rate = tc.learning_rate});
  TrainResult result;
  result.ema = snapshot(params);

  RngStream root(tc.seed);
  RngStream window_rng = root.split(11);
  RngStream noise_rng = root.split(12);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double total = 0.0;
    for (std::size_t b = 0; b < tc.batches_per_epoch; ++b, ++step) {
      std::vector<TrainingWindow> windows;
      windows.reserve(tc.batch_size);
      for (std::size_t k = 0; k < tc.batch_size; ++k) {
        windows.push_back(sampler.window(sampler.sample_start(window_rng)));
      }
      const WindowBatch batch = WindowBatch::stack(windows);
      adam.zero_grad();
      Tape tape;
      std::vector<double> times;
      const Var loss = sequence_loss(tape, model, batch, noise_rng, &times);
      check_loss(loss.value().item(), epoch, step, times);
      tape.backward(loss);
      clip_gradients(params, tc.clip_norm);
      adam.step();
      ema_update(result.ema, params, ema_warmup_rate(tc.ema_rate, step));
      total += loss.value().item();
    }
    EpochRecord record{epoch, total / static_cast<double>(tc.batches_per_epoch), elapsed_ms(start)};
    if (options.log) *options.log << format_epoch(record) << '\n' << std::flush;
    result.history.push_back(record);
  }
  return result;
}

std::vector<Tensor> train_unconditional(
    ScoreNetwork& network, const std::function<Tensor(RngStream&, std::size_t rows)>& draw,
    const TrainConfig& config, std::size_t steps, std::ostream* log) {
  config.validate();
  std::vector<Parameter*> params = network.parameters();
  Adam adam(params, {.learning_rate = config.learning_rate});
  std::vector<Tensor> ema = snapshot(params);
  RngStream root(config.seed);
  RngStream data_rng = root.split(21);
  RngStream noise_rng = root.split(22);
  const std::size_t width = network.config().feature_width;
  const std::size_t report = std::max<std::size_t>(1, config.batches_per_epoch);
  double running = 0.0;
  auto start = std::chrono::steady_clock::now();
  for (std::size_t step = 0; step < steps; ++step) {
    const Tensor x0 = draw(data_rng, config.batch_size);
    adam.zero_grad();
    Tape tape;
    std::vector<double> times;
    const Var features = tape.constant(Tensor({x0.dim(0), width}));
    const Var loss = denoising_loss(tape, network, x0, features, noise_rng, config.t_min, &times);
    check_loss(loss.value().item(), step / report, step, times);
    tape.backward(loss);
    clip_gradients(params, config.clip_norm);
    adam.step();
    ema_update(ema, params, ema_warmup_rate(config.ema_rate, step));
    running += loss.value().item();
    if ((step + 1) % report == 0) {
      if (log) {
        *log << format_epoch({step / report, running / static_cast<double>(report),
                              elapsed_ms(start)})
             << '\n';
      }
      running = 0.0;
      start = std::chrono::steady_clock::now();
    }
  }
  return ema;
}

}  // namespace scoregrad
