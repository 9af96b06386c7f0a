#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "scoregrad/data.hpp"
#include "scoregrad/model.hpp"

namespace scoregrad {

/// Score evaluated on rows of x (rows, D) at one diffusion time.
using ScoreFn = std::function<Tensor(const Tensor& x, double t)>;

struct LossTerm {
  double loss = 0.0;
  double t = 0.0;
};

/// One-sample denoising score-matching loss ||std(t) s(x_t, t) + z||^2 / D with
/// t ~ U(t_min, T) and x_t = perturb(x0, t, z).
LossTerm loss_at_step(const Tensor& x0, const ScoreFn& score, const SdeSpec& sde, RngStream& rng,
                      double t_min = 1e-5);

/// Same loss for fixed (x0, t, z).
double loss_at(const Tensor& x0, const ScoreFn& score, const SdeSpec& sde, double t,
               const Tensor& z);

/// Mean loss over the rows of x0 (rows, D); each row draws its own t and z.
/// `times`, when given, receives the drawn diffusion times.
Var denoising_loss(Tape& tape, const ScoreNetwork& network, const Tensor& x0, const Var& features,
                   RngStream& rng, double t_min, std::vector<double>* times = nullptr);

/// Windows stacked into per-step batches: x_prev[j], c_prev[j], target[j] are
/// (batch, width) slices for step j of every window.
struct WindowBatch {
  std::vector<Tensor> x_prev;
  std::vector<Tensor> c_prev;
  std::vector<Tensor> target;

  static WindowBatch stack(std::span<const TrainingWindow> windows);
  std::size_t steps() const noexcept { return target.size(); }
  std::size_t batch() const { return target.empty() ? 0 : target.front().dim(0); }
};

/// Mean denoising loss over every step of every window, with the feature
/// state threaded through the window.
Var sequence_loss(Tape& tape, const ScoreGradModel& model, const WindowBatch& batch,
                  RngStream& rng, std::vector<double>* times = nullptr);

std::vector<Tensor> snapshot(std::span<Parameter* const> params);
void assign(std::span<Parameter* const> params, std::span<const Tensor> values);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  /// EMA copy of model.parameters().
  std::vector<Tensor> ema;
  std::vector<EpochRecord> history;
};

struct TrainOptions {
  /// Exclusive end of the range windows are drawn from.
  std::size_t train_end = WindowSampler::kHoldOut;
  /// Receives one JSON line per epoch.
  std::ostream* log = nullptr;
};

TrainResult train(ScoreGradModel& model, const Dataset& data, const TrainOptions& options = {});

/// Trains a network on unconditional data: every row is conditioned on a
/// zero feature vector. `draw` returns `rows` fresh data rows (rows, D).
/// Returns the EMA copy of network.parameters().
std::vector<Tensor> train_unconditional(
    ScoreNetwork& network, const std::function<Tensor(RngStream&, std::size_t rows)>& draw,
    const TrainConfig& config, std::size_t steps, std::ostream* log = nullptr);

/// Formats one training-log line.
std::string format_epoch(const EpochRecord& record);

}  // namespace scoregrad
