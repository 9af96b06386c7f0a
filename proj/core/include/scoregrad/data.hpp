#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scoregrad/rng.hpp"
#include "scoregrad/tensor.hpp"

namespace scoregrad {

using Timestamp = std::chrono::sys_seconds;

enum class Frequency { kHourly, kDaily, kHalfHourly };

std::string_view to_string(Frequency freq);
/// Accepts "H", "D" and "30min" (plus a few common spellings).
Frequency parse_frequency(std::string_view name);
std::chrono::seconds period(Frequency freq);
/// Seasonal lag: 24 (hourly), 7 (daily), 48 (30-min).
std::size_t season_length(Frequency freq);

/// ISO-8601 "YYYY-MM-DD[ T]HH:MM[:SS][Z]" or a bare date.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

/// Regularly sampled multivariate series.
struct Dataset {
  std::string name;
  Frequency freq = Frequency::kHourly;
  std::vector<Timestamp> timestamps;
  Tensor values;  // (T, D)

  std::size_t length() const noexcept { return timestamps.size(); }
  std::size_t dims() const { return values.empty() ? 0 : values.dim(1); }
  double value(std::size_t t, std::size_t d) const { return values.at(t, d); }
  /// Timestamp of an index, extrapolated past either end at the fixed frequency.
  Timestamp timestamp_at(std::ptrdiff_t index) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
  /// FNV-1a hash of timestamps and values.
  std::uint64_t fingerprint() const;
};

Dataset parse_csv(std::istream& in, Frequency freq, std::string name = {});
Dataset load_csv(const std::filesystem::path& path, Frequency freq);
void write_csv(std::ostream& out, const Dataset& data, std::span<const std::string> columns = {});

/// Dataset-level settings: {"freq", "prediction_length", "lags"}.
struct DatasetConfig {
  Frequency freq = Frequency::kHourly;
  std::size_t prediction_length = 24;
  std::vector<std::size_t> lags;

  static std::vector<std::size_t> default_lags(Frequency freq);
  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
};

/// Per-dimension denominators: mean absolute value over a context range,
/// replaced by 1 when that mean is 0.
class ScalingContext {
 public:
  ScalingContext() = default;
  explicit ScalingContext(std::vector<double> denominators);
  static ScalingContext from_context(const Tensor& values, std::size_t begin, std::size_t end);

  std::span<const double> denominators() const noexcept { return denominators_; }
  std::size_t dims() const noexcept { return denominators_.size(); }

  /// Divides every row of a (rows, D) tensor (or a length-D vector).
  Tensor scale(const Tensor& rows) const;
  Tensor unscale(const Tensor& rows) const;

 private:
  std::vector<double> denominators_;
};

/// Normalized calendar features followed by lagged scaled targets.
struct CovariateSpec {
  Frequency freq = Frequency::kHourly;
  std::vector<std::size_t> lags;
  std::size_t target_dim = 1;

  static constexpr std::size_t kCalendarWidth = 2;
  std::size_t width() const noexcept { return kCalendarWidth + lags.size() * target_dim; }
  std::size_t max_lag() const noexcept;
};

/// hourly: (hour/23, weekday/6); daily: (weekday/6, (day-1)/30);
/// 30-min: (half-hour/47, weekday/6). Monday is weekday 0.
std::array<double, 2> calendar_features(Timestamp ts, Frequency freq);

/// Covariate rows for series indices first..first+count-1. `scaled` holds the
/// scaled series with row i at absolute index i; lag l of index t reads row
/// t - l, which must exist.
Tensor make_covariates(std::span<const Timestamp> timestamps, const CovariateSpec& spec,
                       const Tensor& scaled, std::size_t first);

/// Training windows of `context + prediction` consecutive points. The first
/// point of a window is input only; every later point is a target whose
/// feature update consumed (x_{t-1}, c_{t-1}).
struct WindowSpec {
  std::size_t context = 24;
  std::size_t prediction = 24;
  std::size_t stride = 1;

  std::size_t length() const noexcept { return context + prediction; }
};

struct TrainingWindow {
  std::size_t start = 0;
  ScalingContext scaling;
  Tensor x_prev;  // (L-1, D)
  Tensor c_prev;  // (L-1, W)
  Tensor target;  // (L-1, D)
};

/// Draws training windows lying entirely before `train_end`. By default the
/// last `prediction` points are held out as the test block.
class WindowSampler {
 public:
  static constexpr std::size_t kHoldOut = static_cast<std::size_t>(-1);

  WindowSampler(const Dataset& data, WindowSpec spec, CovariateSpec covariates,
                std::size_t train_end = kHoldOut);

  std::size_t earliest_start() const noexcept { return earliest_; }
  std::size_t latest_start() const noexcept { return latest_; }
  std::size_t count() const noexcept { return (latest_ - earliest_) / spec_.stride + 1; }
  std::size_t train_end() const noexcept { return train_end_; }

  std::size_t sample_start(RngStream& rng) const;
  TrainingWindow window(std::size_t start) const;

 private:
  const Dataset* data_;
  WindowSpec spec_;
  CovariateSpec covariates_;
  std::size_t earliest_ = 0;
  std::size_t latest_ = 0;
  std::size_t train_end_ = 0;
};

/// First index of the held-out test block: T - prediction.
std::size_t test_split_start(const Dataset& data, std::size_t prediction);

/// Largest Euclidean distance between two rows of `values` after dividing each
/// column by its mean absolute value.
double max_pairwise_distance(const Tensor& values);

}  // namespace scoregrad
