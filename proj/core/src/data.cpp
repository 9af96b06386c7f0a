#include "scoregrad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "scoregrad/errors.hpp"

namespace scoregrad {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '"')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    out.push_back(trim(line.substr(pos, next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string_view to_string(Frequency freq) {
  switch (freq) {
    case Frequency::kHourly: return "H";
    case Frequency::kDaily: return "D";
    case Frequency::kHalfHourly: return "30min";
  }
  return "?";
}

Frequency parse_frequency(std::string_view name) {
  if (name == "H" || name == "h" || name == "hour" || name == "hourly" || name == "1H") {
    return Frequency::kHourly;
  }
  if (name == "D" || name == "d" || name == "day" || name == "daily" || name == "1D") {
    return Frequency::kDaily;
  }
  if (name == "30min" || name == "30T" || name == "30m" || name == "half-hourly") {
    return Frequency::kHalfHourly;
  }
  throw ConfigError("unknown frequency '" + std::string(name) + "' (expected H, D or 30min)");
}

std::chrono::seconds period(Frequency freq) {
  switch (freq) {
    case Frequency::kHourly: return std::chrono::hours(1);
    case Frequency::kDaily: return std::chrono::hours(24);
    case Frequency::kHalfHourly: return std::chrono::minutes(30);
  }
  return std::chrono::hours(1);
}

std::size_t season_length(Frequency freq) {
  switch (freq) {
    case Frequency::kHourly: return 24;
    case Frequency::kDaily: return 7;
    case Frequency::kHalfHourly: return 48;
  }
  return 1;
}

Timestamp parse_timestamp(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  auto fail = [&]() -> Timestamp {
    throw DataError("invalid timestamp '" + std::string(text) + "'");
  };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return fail();
  int y = 0;
  unsigned mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (!parse_number(text.substr(0, 4), y) || !parse_number(text.substr(5, 2), mo) ||
      !parse_number(text.substr(8, 2), d)) {
    return fail();
  }
  if (text.size() > 10) {
    if (text[10] != ' ' && text[10] != 'T') return fail();
    const std::string_view clock = text.substr(11);
    if (clock.size() != 5 && clock.size() != 8) return fail();
    if (clock[2] != ':' || !parse_number(clock.substr(0, 2), hh) ||
        !parse_number(clock.substr(3, 2), mm)) {
      return fail();
    }
    if (clock.size() == 8 && (clock[5] != ':' || !parse_number(clock.substr(6, 2), ss))) {
      return fail();
    }
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) return fail();
  return std::chrono::sys_days{ymd} + std::chrono::hours(hh) + std::chrono::minutes(mm) +
         std::chrono::seconds(ss);
}

std::string format_timestamp(Timestamp ts) {
  const auto days = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{ts - days};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

Timestamp Dataset::timestamp_at(std::ptrdiff_t index) const {
  if (timestamps.empty()) throw DataError("dataset: no timestamps");
  return timestamps.front() + period(freq) * index;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length()) throw DataError("dataset: slice out of range");
  Dataset out{name, freq, {timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                           timestamps.begin() + static_cast<std::ptrdiff_t>(end)},
              Tensor({end - begin, dims()})};
  const std::size_t D = dims();
  std::copy_n(values.data().begin() + static_cast<std::ptrdiff_t>(begin * D), (end - begin) * D,
              out.values.data().begin());
  return out;
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (Timestamp ts : timestamps) {
    const std::int64_t s = ts.time_since_epoch().count();
    feed(&s, sizeof(s));
  }
  for (double v : values.data()) feed(&v, sizeof(v));
  return h;
}

Dataset parse_csv(std::istream& in, Frequency freq, std::string name) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty input (header row required)");
  const std::size_t columns = split(line, ',').size();
  if (columns < 2) throw DataError("csv: need a timestamp column and at least one value column");
  const std::size_t D = columns - 1;

  Dataset data;
  data.name = std::move(name);
  data.freq = freq;
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != columns) {
      throw DataError("csv row " + std::to_string(row) + ": expected " + std::to_string(columns) +
                      " cells, found " + std::to_string(cells.size()));
    }
    Timestamp ts;
    try {
      ts = parse_timestamp(cells[0]);
    } catch (const DataError& e) {
      throw DataError("csv row " + std::to_string(row) + ": " + e.what());
    }
    if (!data.timestamps.empty()) {
      const Timestamp prev = data.timestamps.back();
      if (ts == prev) {
        throw DataError("csv row " + std::to_string(row) + ": duplicate timestamp " +
                        format_timestamp(ts));
      }
      if (ts < prev) {
        throw DataError("csv row " + std::to_string(row) + ": timestamp " + format_timestamp(ts) +
                        " is earlier than the previous row");
      }
      if (ts != prev + period(freq)) {
        throw DataError("csv row " + std::to_string(row) + ": gap in timestamps, expected " +
                        format_timestamp(prev + period(freq)) + " but found " +
                        format_timestamp(ts));
      }
    }
    data.timestamps.push_back(ts);
    for (std::size_t c = 1; c < columns; ++c) {
      double v = 0.0;
      if (!parse_number(cells[c], v) || !std::isfinite(v)) {
        throw DataError("csv row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                        ": non-numeric value '" + std::string(cells[c]) + "'");
      }
      values.push_back(v);
    }
  }
  if (data.timestamps.empty()) throw DataError("csv: no data rows");
  data.values = Tensor({data.timestamps.size(), D}, std::move(values));
  return data;
}

Dataset load_csv(const std::filesystem::path& path, Frequency freq) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  return parse_csv(in, freq, path.stem().string());
}

void write_csv(std::ostream& out, const Dataset& data, std::span<const std::string> columns) {
  out << "timestamp";
  for (std::size_t d = 0; d < data.dims(); ++d) {
    out << ',' << (d < columns.size() ? columns[d] : "x" + std::to_string(d));
  }
  out << '\n';
  char buf[64];
  for (std::size_t t = 0; t < data.length(); ++t) {
    out << format_timestamp(data.timestamps[t]);
    for (std::size_t d = 0; d < data.dims(); ++d) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), data.value(t, d));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

std::vector<std::size_t> DatasetConfig::default_lags(Frequency freq) {
  return {1, season_length(freq)};
}

nlohmann::json DatasetConfig::to_json() const {
  return {{"freq", std::string(to_string(freq))},
          {"prediction_length", prediction_length},
          {"lags", lags}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.freq = parse_frequency(j.at("freq").get<std::string>());
  c.prediction_length = j.value("prediction_length", c.prediction_length);
  if (c.prediction_length == 0) throw ConfigError("dataset config: prediction_length must be > 0");
  c.lags = j.contains("lags") ? j.at("lags").get<std::vector<std::size_t>>() : default_lags(c.freq);
  for (std::size_t l : c.lags) {
    if (l == 0) throw ConfigError("dataset config: lags must be >= 1");
  }
  return c;
}

ScalingContext::ScalingContext(std::vector<double> denominators)
    : denominators_(std::move(denominators)) {
  for (double d : denominators_) {
    if (!(d > 0.0) || !std::isfinite(d)) throw DataError("scaling: denominators must be > 0");
  }
}

ScalingContext ScalingContext::from_context(const Tensor& values, std::size_t begin,
                                            std::size_t end) {
  if (values.rank() != 2 || begin >= end || end > values.dim(0)) {
    throw DataError("scaling: empty or out-of-range context");
  }
  const std::size_t D = values.dim(1);
  std::vector<double> denom(D, 0.0);
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t d = 0; d < D; ++d) denom[d] += std::abs(values.at(t, d));
  }
  for (double& v : denom) {
    v /= static_cast<double>(end - begin);
    if (v == 0.0) v = 1.0;
  }
  return ScalingContext(std::move(denom));
}

Tensor ScalingContext::scale(const Tensor& rows) const {
  const std::size_t D = dims();
  if (rows.empty() || rows.shape().back() != D) {
    throw ShapeError("scale: rows " + to_string(rows.shape()) + " vs " + std::to_string(D) +
                     " denominators");
  }
  Tensor out = rows;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= denominators_[i % D];
  return out;
}

Tensor ScalingContext::unscale(const Tensor& rows) const {
  const std::size_t D = dims();
  if (rows.empty() || rows.shape().back() != D) {
    throw ShapeError("unscale: rows " + to_string(rows.shape()) + " vs " + std::to_string(D) +
                     " denominators");
  }
  Tensor out = rows;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= denominators_[i % D];
  return out;
}

std::size_t CovariateSpec::max_lag() const noexcept {
  return lags.empty() ? 0 : *std::max_element(lags.begin(), lags.end());
}

std::array<double, 2> calendar_features(Timestamp ts, Frequency freq) {
  const auto days = std::chrono::floor<std::chrono::days>(ts);
  const double weekday =
      static_cast<double>(std::chrono::weekday{days}.iso_encoding() - 1) / 6.0;
  const auto since_midnight = std::chrono::duration_cast<std::chrono::minutes>(ts - days).count();
  switch (freq) {
    case Frequency::kHourly:
      return {static_cast<double>(since_midnight / 60) / 23.0, weekday};
    case Frequency::kHalfHourly:
      return {static_cast<double>(since_midnight / 30) / 47.0, weekday};
    case Frequency::kDaily: {
      const std::chrono::year_month_day ymd{days};
      return {weekday, static_cast<double>(static_cast<unsigned>(ymd.day()) - 1) / 30.0};
    }
  }
  return {0.0, 0.0};
}

Tensor make_covariates(std::span<const Timestamp> timestamps, const CovariateSpec& spec,
                       const Tensor& scaled, std::size_t first) {
  const std::size_t W = spec.width(), D = spec.target_dim;
  if (!spec.lags.empty() && (scaled.rank() != 2 || scaled.dim(1) != D)) {
    throw ShapeError("make_covariates: scaled values " + to_string(scaled.shape()) +
                     " do not have " + std::to_string(D) + " columns");
  }
  Tensor out({timestamps.size(), W});
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const std::size_t t = first + i;
    const auto cal = calendar_features(timestamps[i], spec.freq);
    double* row = out.data().data() + i * W;
    row[0] = cal[0];
    row[1] = cal[1];
    for (std::size_t k = 0; k < spec.lags.size(); ++k) {
      const std::size_t lag = spec.lags[k];
      if (t < lag || t - lag >= scaled.dim(0)) {
        throw DataError("make_covariates: index " + std::to_string(t) + " lacks history for lag " +
                        std::to_string(lag));
      }
      for (std::size_t d = 0; d < D; ++d) {
        row[CovariateSpec::kCalendarWidth + k * D + d] = scaled.at(t - lag, d);
      }
    }
  }
  return out;
}

WindowSampler::WindowSampler(const Dataset& data, WindowSpec spec, CovariateSpec covariates,
                             std::size_t train_end)
    : data_(&data), spec_(spec), covariates_(std::move(covariates)) {
  if (spec_.context == 0 || spec_.prediction == 0 || spec_.stride == 0) {
    throw ConfigError("window: context, prediction and stride must be positive");
  }
  if (train_end == kHoldOut) {
    if (data.length() < spec_.prediction) throw DataError("window: dataset too short");
    train_end = data.length() - spec_.prediction;
  }
  train_end_ = std::min(train_end, data.length());
  earliest_ = covariates_.max_lag();
  if (train_end_ < spec_.length() || train_end_ - spec_.length() < earliest_) {
    throw DataError("window: dataset too short (" + std::to_string(data.length()) +
                    " points) for windows of " + std::to_string(spec_.length()) +
                    " with lag history " + std::to_string(earliest_));
  }
  latest_ = train_end_ - spec_.length();
}

std::size_t WindowSampler::sample_start(RngStream& rng) const {
  return earliest_ + rng.index(count()) * spec_.stride;
}

TrainingWindow WindowSampler::window(std::size_t start) const {
  if (start < earliest_ || start > latest_) throw DataError("window: start out of range");
  const std::size_t L = spec_.length(), D = data_->dims();
  TrainingWindow w;
  w.start = start;
  w.scaling = ScalingContext::from_context(data_->values, start, start + spec_.context);
  // Scaled rows begin max_lag points before the window so lag covariates
  // can be read from them.
  const std::size_t first = start - earliest_;
  const std::size_t offset = start - first;
  Tensor raw({offset + L, D});
  std::copy_n(data_->values.data().begin() + static_cast<std::ptrdiff_t>(first * D), raw.size(),
              raw.data().begin());
  const Tensor scaled = w.scaling.scale(raw);
  w.x_prev = Tensor({L - 1, D});
  w.target = Tensor({L - 1, D});
  for (std::size_t j = 0; j + 1 < L; ++j) {
    for (std::size_t d = 0; d < D; ++d) {
      w.x_prev.at(j, d) = scaled.at(offset + j, d);
      w.target.at(j, d) = scaled.at(offset + j + 1, d);
    }
  }
  std::span<const Timestamp> ts(data_->timestamps.data() + start, L - 1);
  w.c_prev = make_covariates(ts, covariates_, scaled, offset);
  return w;
}

std::size_t test_split_start(const Dataset& data, std::size_t prediction) {
  if (data.length() < prediction) throw DataError("test split: dataset shorter than prediction");
  return data.length() - prediction;
}

double max_pairwise_distance(const Tensor& values) {
  if (values.rank() != 2 || values.dim(0) == 0) return 0.0;
  const ScalingContext scaling = ScalingContext::from_context(values, 0, values.dim(0));
  const Tensor scaled = scaling.scale(values);
  const std::size_t T = scaled.dim(0), D = scaled.dim(1);
  double best = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i + 1; j < T; ++j) {
      double acc = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = scaled.at(i, d) - scaled.at(j, d);
        acc += diff * diff;
      }
      best = std::max(best, acc);
    }
  }
  return std::sqrt(best);
}

}  // namespace scoregrad
