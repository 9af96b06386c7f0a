#include "scoregrad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"

namespace scoregrad {

double crps_univariate(std::span<const double> samples, double observation) {
  if (samples.empty()) throw DataError("crps: empty sample set");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double S = static_cast<double>(sorted.size());
  double abs_err = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    abs_err += std::abs(sorted[i] - observation);
    spread += (2.0 * static_cast<double>(i) + 1.0 - S) * sorted[i];
  }
  return std::max(0.0, abs_err / S - spread / (S * S));
}

namespace {

void check_alignment(const ForecastSamples& forecast, const Tensor& observations) {
  if (observations.rank() != 2 || observations.dim(0) != forecast.horizon() ||
      observations.dim(1) != forecast.dims()) {
    throw ShapeError("metrics: observations " + to_string(observations.shape()) +
                     " do not match forecast " + to_string(forecast.values.shape()));
  }
}

}  // namespace

double crps_sum(const ForecastSamples& forecast, const Tensor& observations) {
  check_alignment(forecast, observations);
  const std::size_t S = forecast.samples(), H = forecast.horizon(), D = forecast.dims();
  double total = 0.0;
  std::vector<double> sums(S);
  for (std::size_t h = 0; h < H; ++h) {
    double obs = 0.0;
    for (std::size_t d = 0; d < D; ++d) obs += observations.at(h, d);
    for (std::size_t s = 0; s < S; ++s) {
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) acc += forecast.at(s, h, d);
      sums[s] = acc;
    }
    total += crps_univariate(sums, obs);
  }
  return total / static_cast<double>(H);
}

std::vector<double> crps_per_dim(const ForecastSamples& forecast, const Tensor& observations) {
  check_alignment(forecast, observations);
  const std::size_t S = forecast.samples(), H = forecast.horizon(), D = forecast.dims();
  std::vector<double> out(D, 0.0), column(S);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t s = 0; s < S; ++s) column[s] = forecast.at(s, h, d);
      out[d] += crps_univariate(column, observations.at(h, d));
    }
    out[d] /= static_cast<double>(H);
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile: empty sample set");
  if (!(q >= 0.0 && q <= 1.0)) throw RangeError("quantile: level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::map<double, double> coverage(const ForecastSamples& forecast, const Tensor& observations,
                                  std::span<const double> levels) {
  check_alignment(forecast, observations);
  const std::size_t S = forecast.samples(), H = forecast.horizon(), D = forecast.dims();
  std::map<double, std::size_t> hits;
  for (double level : levels) {
    if (!(level > 0.0 && level < 1.0)) throw RangeError("coverage: level outside (0, 1)");
    hits[level] = 0;
  }
  std::vector<double> column(S);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t s = 0; s < S; ++s) column[s] = forecast.at(s, h, d);
      std::sort(column.begin(), column.end());
      const double obs = observations.at(h, d);
      for (auto& [level, count] : hits) {
        const double lo = quantile(column, 0.5 - level / 2.0);
        const double hi = quantile(column, 0.5 + level / 2.0);
        if (obs >= lo && obs <= hi) ++count;
      }
    }
  }
  std::map<double, double> out;
  for (const auto& [level, count] : hits) {
    out[level] = static_cast<double>(count) / static_cast<double>(H * D);
  }
  return out;
}

std::string level_key(double level) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", level);
  return buf;
}

nlohmann::json quantile_bands(const ForecastSamples& forecast) {
  const std::size_t S = forecast.samples(), H = forecast.horizon(), D = forecast.dims();
  nlohmann::json bands = nlohmann::json::object();
  std::vector<nlohmann::json> per_level(std::size(kBandQuantiles), nlohmann::json::array());
  std::vector<double> column(S);
  for (std::size_t h = 0; h < H; ++h) {
    std::vector<nlohmann::json> rows(std::size(kBandQuantiles), nlohmann::json::array());
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t s = 0; s < S; ++s) column[s] = forecast.at(s, h, d);
      std::sort(column.begin(), column.end());
      for (std::size_t q = 0; q < std::size(kBandQuantiles); ++q) {
        rows[q].push_back(quantile(column, kBandQuantiles[q]));
      }
    }
    for (std::size_t q = 0; q < rows.size(); ++q) per_level[q].push_back(std::move(rows[q]));
  }
  for (std::size_t q = 0; q < per_level.size(); ++q) {
    bands[level_key(kBandQuantiles[q])] = std::move(per_level[q]);
  }
  return {{"quantiles", std::move(bands)},
          {"horizon", H},
          {"dims", D},
          {"start_timestamp", format_timestamp(forecast.start)},
          {"freq", std::string(to_string(forecast.freq))}};
}

nlohmann::json CrpsReport::to_json() const {
  nlohmann::json cov = nlohmann::json::object();
  for (const auto& [level, rate] : coverage) cov[level_key(level)] = rate;
  return {{"crps_sum", crps_sum},
          {"crps_mean_per_dim", crps_per_dim},
          {"coverage", std::move(cov)},
          {"n_samples", samples},
          {"horizon", horizon}};
}

CrpsReport evaluate_forecast(const ForecastSamples& forecast, const Tensor& observations) {
  CrpsReport r;
  r.crps_sum = crps_sum(forecast, observations);
  r.crps_per_dim = crps_per_dim(forecast, observations);
  r.coverage = coverage(forecast, observations, kCoverageLevels);
  r.samples = forecast.samples();
  r.horizon = forecast.horizon();
  return r;
}

}  // namespace scoregrad
