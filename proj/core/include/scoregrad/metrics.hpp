#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scoregrad/sampling.hpp"

namespace scoregrad {

/// Energy form (1/S) sum |x - y| - (1/2S^2) sum sum |x - x'|, evaluated in
/// O(S log S) from the sorted samples.
double crps_univariate(std::span<const double> samples, double observation);

/// For each horizon step, sums samples and observation over dimensions and
/// scores the sums; returns the mean over the horizon. observations is (H, D).
double crps_sum(const ForecastSamples& forecast, const Tensor& observations);

/// Per-dimension CRPS averaged over the horizon (width D).
std::vector<double> crps_per_dim(const ForecastSamples& forecast, const Tensor& observations);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

/// Fraction of (h, d) cells whose observation lies in the central interval
/// of each level.
std::map<double, double> coverage(const ForecastSamples& forecast, const Tensor& observations,
                                  std::span<const double> levels);

inline constexpr double kBandQuantiles[] = {0.05, 0.25, 0.5, 0.75, 0.95};
inline constexpr double kCoverageLevels[] = {0.5, 0.9};

/// {"quantiles": {"0.05": [[...D] x H], ...}}
nlohmann::json quantile_bands(const ForecastSamples& forecast);

struct CrpsReport {
  double crps_sum = 0.0;
  std::vector<double> crps_per_dim;
  std::map<double, double> coverage;
  std::size_t samples = 0;
  std::size_t horizon = 0;

  nlohmann::json to_json() const;
};

CrpsReport evaluate_forecast(const ForecastSamples& forecast, const Tensor& observations);

/// Label used for quantile and coverage keys, e.g. 0.05 -> "0.05".
std::string level_key(double level);

}  // namespace scoregrad
