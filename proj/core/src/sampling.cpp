#include "scoregrad/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"
#include "scoregrad/parallel.hpp"

namespace scoregrad {

std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::kEulerMaruyama: return "euler_maruyama";
    case PredictorKind::kReverseDiffusion: return "reverse_diffusion";
    case PredictorKind::kAncestral: return "ancestral";
    case PredictorKind::kNone: return "none";
  }
  return "?";
}

std::string_view to_string(CorrectorKind kind) {
  return kind == CorrectorKind::kLangevin ? "langevin" : "none";
}

PredictorKind parse_predictor(std::string_view name) {
  if (name == "euler_maruyama" || name == "euler-maruyama" || name == "em") {
    return PredictorKind::kEulerMaruyama;
  }
  if (name == "reverse_diffusion" || name == "reverse-diffusion" || name == "rd") {
    return PredictorKind::kReverseDiffusion;
  }
  if (name == "ancestral" || name == "ancestral_sampling") return PredictorKind::kAncestral;
  if (name == "none" || name == "identity") return PredictorKind::kNone;
  throw ConfigError("unknown predictor '" + std::string(name) +
                    "' (expected euler_maruyama, reverse_diffusion, ancestral or none)");
}

CorrectorKind parse_corrector(std::string_view name) {
  if (name == "langevin" || name == "ald") return CorrectorKind::kLangevin;
  if (name == "none" || name == "identity") return CorrectorKind::kNone;
  throw ConfigError("unknown corrector '" + std::string(name) + "' (expected langevin or none)");
}

SamplerConfig SamplerConfig::defaults_for(SdeKind kind) {
  SamplerConfig c;
  c.steps = kind == SdeKind::kSubVP ? 180 : 100;
  return c;
}

void SamplerConfig::validate(const SdeSpec& sde) const {
  if (predictor == PredictorKind::kNone && corrector == CorrectorKind::kNone) {
    throw ConfigError("sampler: predictor and corrector cannot both be none");
  }
  if (predictor == PredictorKind::kAncestral && sde.kind() == SdeKind::kSubVP) {
    throw ConfigError("sampler: ancestral sampling is not available for the subVP SDE");
  }
  if (steps < 2) throw ConfigError("sampler: steps must be >= 2");
  // Discrete betas beta(t_i) T / N above 1 make the VP update undefined.
  if (sde.kind() != SdeKind::kVE &&
      sde.beta_max() * sde.horizon() > static_cast<double>(steps) * (1.0 + 1e-12)) {
    throw ConfigError("sampler: steps N=" + std::to_string(steps) + " too small; need N >= " +
                      "beta_max * T_s = " + std::to_string(sde.beta_max() * sde.horizon()));
  }
  if (corrector == CorrectorKind::kLangevin && corrector_steps == 0) {
    throw ConfigError("sampler: corrector_steps must be >= 1 with the langevin corrector");
  }
  if (!(snr > 0.0) || !std::isfinite(snr)) throw ConfigError("sampler: snr must be > 0");
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"predictor", std::string(to_string(predictor))},
          {"corrector", std::string(to_string(corrector))},
          {"steps", steps},
          {"corrector_steps", corrector_steps},
          {"snr", snr},
          {"denoise_final", denoise_final}};
}

PcSampler::PcSampler(SdeSpec sde, SamplerConfig config)
    : sde_(sde), config_(config), grid_() {
  config_.validate(sde_);
  grid_ = sde_.discretize(config_.steps);
}

std::size_t PcSampler::evaluations() const noexcept {
  const std::size_t per_step =
      (config_.predictor != PredictorKind::kNone ? 1 : 0) +
      (config_.corrector == CorrectorKind::kLangevin ? config_.corrector_steps : 0);
  return (config_.steps - 1) * per_step;
}

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

double mean_row_norm(const Tensor& x) {
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t width = x.size() / rows;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t d = 0; d < width; ++d) acc += x[r * width + d] * x[r * width + d];
    total += std::sqrt(acc);
  }
  return total / static_cast<double>(rows);
}

}  // namespace

Tensor PcSampler::predictor_step(const Tensor& x, const Tensor& score, std::size_t i,
                                 const Tensor& noise) const {
  check_same_shape("predictor", x, score);
  check_same_shape("predictor", x, noise);
  if (i == 0 || i > grid_.steps) throw RangeError("predictor: grid index out of range");
  Tensor out = x;
  auto o = out.data();
  const auto s = score.data();
  const auto z = noise.data();
  switch (config_.predictor) {
    case PredictorKind::kNone:
      break;
    case PredictorKind::kEulerMaruyama:
    case PredictorKind::kReverseDiffusion: {
      const double t = grid_.times[i], delta = grid_.step;
      const double f = sde_.drift_coeff(t) * delta;
      const double g = sde_.diffusion(t);
      const double g2 = g * g * delta, gn = g * std::sqrt(delta);
      for (std::size_t k = 0; k < o.size(); ++k) o[k] = x[k] - f * x[k] + g2 * s[k] + gn * z[k];
      break;
    }
    case PredictorKind::kAncestral:
      if (sde_.kind() == SdeKind::kVE) {
        const double si = grid_.sigmas[i], sp = grid_.sigmas[i - 1];
        const double gap = si * si - sp * sp;
        const double noise_std = std::sqrt(std::max(0.0, sp * sp * gap / (si * si)));
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = x[k] + gap * s[k] + noise_std * z[k];
      } else {
        const double beta = grid_.betas[i];
        const double a = 2.0 - std::sqrt(1.0 - beta), b = std::sqrt(beta);
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = a * x[k] + beta * s[k] + b * z[k];
      }
      break;
  }
  return out;
}

double PcSampler::corrector_alpha(std::size_t i) const {
  return sde_.kind() == SdeKind::kVP ? grid_.alphas[i] : 1.0;
}

Tensor PcSampler::corrector_step(const Tensor& x, const Tensor& score, std::size_t i,
                                 const Tensor& noise) const {
  check_same_shape("corrector", x, score);
  check_same_shape("corrector", x, noise);
  if (i > grid_.steps) throw RangeError("corrector: grid index out of range");
  const double g_norm = mean_row_norm(score);
  if (g_norm == 0.0) return x;
  const double ratio = config_.snr * mean_row_norm(noise) / g_norm;
  const double eps = 2.0 * corrector_alpha(i) * ratio * ratio;
  const double noise_scale = std::sqrt(2.0 * eps);
  Tensor out = x;
  auto o = out.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] += eps * score[k] + noise_scale * noise[k];
  return out;
}

Tensor PcSampler::predictor_step(const Tensor& x, const ScoreFn& score, std::size_t i,
                                 RngStream& rng) const {
  if (config_.predictor == PredictorKind::kNone) return x;
  return predictor_step(x, score(x, grid_.times[i]), i, rng.normal(x.shape()));
}

Tensor PcSampler::corrector_step(const Tensor& x, const ScoreFn& score, std::size_t i,
                                 RngStream& rng) const {
  return corrector_step(x, score(x, grid_.times[i]), i, rng.normal(x.shape()));
}

Tensor PcSampler::sample(const ScoreFn& score, std::size_t rows, std::size_t dims, RngStream& rng,
                         std::size_t* evaluations) const {
  Tensor x = rng.normal({rows, dims});
  const double prior = sde_.prior_std();
  for (double& v : x.data()) v *= prior;
  std::size_t count = 0;
  for (std::size_t k = grid_.steps - 1; k >= 1; --k) {
    const std::size_t i = k + 1;
    const double t = grid_.times[i];
    if (config_.predictor != PredictorKind::kNone) {
      const Tensor s = score(x, t);
      ++count;
      Tensor z = rng.normal(x.shape());
      if (config_.denoise_final && k == 1) z.fill(0.0);
      x = predictor_step(x, s, i, z);
    }
    if (config_.corrector == CorrectorKind::kLangevin) {
      for (std::size_t j = 0; j < config_.corrector_steps; ++j) {
        const Tensor s = score(x, t);
        ++count;
        x = corrector_step(x, s, i, rng.normal(x.shape()));
      }
    }
    if (!x.all_finite()) {
      throw NumericalError("sampler: non-finite state at k=" + std::to_string(k) +
                           " (predictor " + std::string(to_string(config_.predictor)) +
                           ", corrector " + std::string(to_string(config_.corrector)) + ")");
    }
  }
  if (evaluations) *evaluations = count;
  return x;
}

nlohmann::json ForecastSamples::to_json() const {
  const std::size_t S = samples(), H = horizon(), D = dims();
  nlohmann::json traj = nlohmann::json::array();
  for (std::size_t s = 0; s < S; ++s) {
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t h = 0; h < H; ++h) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t d = 0; d < D; ++d) row.push_back(at(s, h, d));
      steps.push_back(std::move(row));
    }
    traj.push_back(std::move(steps));
  }
  return {{"samples", std::move(traj)},
          {"horizon", H},
          {"dims", D},
          {"n_samples", S},
          {"start_timestamp", format_timestamp(start)},
          {"freq", std::string(to_string(freq))}};
}

namespace {

struct ContextEncoding {
  ScalingContext scaling;
  FeatureState state;       // batch 1
  Tensor history;           // scaled values [origin - C - max_lag, origin)
  std::size_t history_start = 0;
};

ContextEncoding encode_forecast_context(const ScoreGradModel& model, const Dataset& data,
                                        std::size_t origin) {
  const ModelConfig& cfg = model.config();
  const CovariateSpec cov = cfg.covariates();
  const std::size_t C = cfg.context_length(), lag = cov.max_lag(), D = cfg.target_dim;
  if (data.dims() != D) {
    throw DataError("forecast: data has " + std::to_string(data.dims()) +
                    " columns, model expects " + std::to_string(D));
  }
  if (origin > data.length()) throw DataError("forecast: origin beyond the end of the data");
  if (origin < C + lag) {
    throw DataError("forecast: origin " + std::to_string(origin) + " leaves " +
                    std::to_string(origin) + " points of history, need " +
                    std::to_string(C + lag) + " (context " + std::to_string(C) + " + lag " +
                    std::to_string(lag) + ")");
  }
  ContextEncoding enc{ScalingContext::from_context(data.values, origin - C, origin), {}, {}, 0};
  enc.history_start = origin - C - lag;
  Tensor raw({C + lag, D});
  std::copy_n(data.values.data().begin() + static_cast<std::ptrdiff_t>(enc.history_start * D),
              raw.size(), raw.data().begin());
  enc.history = enc.scaling.scale(raw);
  const Tensor covariates = make_covariates(
      std::span(data.timestamps).subspan(origin - C, C), cov, enc.history, lag);
  enc.state = model.features().init_state(1);
  for (std::size_t j = 0; j < C; ++j) {
    Tensor x({1, D}), c({1, cov.width()});
    std::copy_n(enc.history.data().begin() + static_cast<std::ptrdiff_t>((lag + j) * D), D,
                x.data().begin());
    std::copy_n(covariates.data().begin() + static_cast<std::ptrdiff_t>(j * cov.width()),
                cov.width(), c.data().begin());
    enc.state = model.features().update(enc.state, x, c);
  }
  return enc;
}

FeatureState replicate(const FeatureState& state, std::size_t rows) {
  FeatureState out;
  for (const Tensor& layer : state.layers) {
    const std::size_t H = layer.dim(1);
    Tensor t({rows, H});
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(layer.data().begin(), H, t.data().begin() + static_cast<std::ptrdiff_t>(r * H));
    }
    out.layers.push_back(std::move(t));
  }
  return out;
}

}  // namespace

ForecastSamples forecast(const ScoreGradModel& model, const Dataset& data,
                         const ForecastRequest& request, const SamplerConfig& sampler_config) {
  if (request.horizon == 0) throw ConfigError("forecast: horizon must be >= 1");
  if (request.samples == 0) throw ConfigError("forecast: samples must be >= 1");
  const ModelConfig& cfg = model.config();
  const PcSampler sampler(cfg.sde, sampler_config);
  const CovariateSpec cov = cfg.covariates();
  const std::size_t D = cfg.target_dim, H = request.horizon, S = request.samples;
  const std::size_t W = cov.width();
  const ContextEncoding enc = encode_forecast_context(model, data, request.origin);

  ForecastSamples out{Tensor({S, H, D}), data.timestamp_at(static_cast<std::ptrdiff_t>(request.origin)),
                      data.freq};
  const std::size_t groups = (S + kForecastGroup - 1) / kForecastGroup;
  const RngStream root(request.seed);

  parallel_for(groups, request.threads, [&](std::size_t g) {
    const std::size_t first = g * kForecastGroup;
    const std::size_t rows = std::min(kForecastGroup, S - first);
    RngStream rng = root.split(g);
    FeatureState state = replicate(enc.state, rows);
    // Scaled predictions, (rows, H, D).
    std::vector<double> predicted(rows * H * D);
    auto scaled_value = [&](std::size_t r, std::size_t absolute, std::size_t d) {
      if (absolute < request.origin) {
        return enc.history.at(absolute - enc.history_start, d);
      }
      return predicted[(r * H + (absolute - request.origin)) * D + d];
    };
    for (std::size_t h = 0; h < H; ++h) {
      const ScoreFn score = [&](const Tensor& x, double t) {
        const std::vector<double> times(x.dim(0), t);
        return model.network().score(x, state.output(), times);
      };
      const Tensor x = sampler.sample(score, rows, D, rng);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t d = 0; d < D; ++d) predicted[(r * H + h) * D + d] = x.at(r, d);
      }
      if (h + 1 == H) break;
      const std::size_t absolute = request.origin + h;
      const auto calendar =
          calendar_features(data.timestamp_at(static_cast<std::ptrdiff_t>(absolute)), cov.freq);
      Tensor c({rows, W});
      for (std::size_t r = 0; r < rows; ++r) {
        c.at(r, 0) = calendar[0];
        c.at(r, 1) = calendar[1];
        for (std::size_t k = 0; k < cov.lags.size(); ++k) {
          for (std::size_t d = 0; d < D; ++d) {
            c.at(r, CovariateSpec::kCalendarWidth + k * D + d) =
                scaled_value(r, absolute - cov.lags[k], d);
          }
        }
      }
      state = model.features().update(state, x, c);
    }
    const auto& denom = enc.scaling.denominators();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t d = 0; d < D; ++d) {
          out.values[((first + r) * H + h) * D + d] = predicted[(r * H + h) * D + d] * denom[d];
        }
      }
    }
  });
  return out;
}

ForecastSamples seasonal_naive(const Dataset& data, std::size_t origin, std::size_t horizon) {
  const std::size_t season = season_length(data.freq), D = data.dims();
  if (origin < season || origin > data.length()) {
    throw DataError("seasonal naive: need one full season of history before the origin");
  }
  ForecastSamples out{Tensor({1, horizon, D}),
                      data.timestamp_at(static_cast<std::ptrdiff_t>(origin)), data.freq};
  for (std::size_t h = 0; h < horizon; ++h) {
    const std::size_t source = origin + (h % season) - season;
    for (std::size_t d = 0; d < D; ++d) out.values[h * D + d] = data.value(source, d);
  }
  return out;
}

}  // namespace scoregrad
