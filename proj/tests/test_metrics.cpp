#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregrad/errors.hpp"
#include "scoregrad/metrics.hpp"

using namespace scoregrad;

namespace {

// Integral of (F(y) - 1{y >= obs})^2 on a midpoint grid. Samples and the
// observation sit on multiples of 1e-3, so the midpoint rule is exact.
double crps_by_integration(std::vector<double> samples, double obs) {
  std::sort(samples.begin(), samples.end());
  const double step = 1e-4;
  const double lo = std::min(samples.front(), obs) - 0.01;
  const double hi = std::max(samples.back(), obs) + 0.01;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  const double S = static_cast<double>(samples.size());
  double total = 0.0;
  for (long k = 0; k < n; ++k) {
    const double y = lo + (static_cast<double>(k) + 0.5) * step;
    const double F =
        static_cast<double>(std::upper_bound(samples.begin(), samples.end(), y) - samples.begin()) / S;
    const double diff = F - (y >= obs ? 1.0 : 0.0);
    total += diff * diff * step;
  }
  return total;
}

ForecastSamples make_forecast(std::size_t S, std::size_t H, std::size_t D,
                              const std::vector<double>& values) {
  return ForecastSamples{Tensor({S, H, D}, values), {}, Frequency::kHourly};
}

}  // namespace

TEST(Crps, FixedCases) {
  const std::vector<double> two = {0.0, 1.0};
  EXPECT_NEAR(crps_univariate(two, 0.5), 0.25, 1e-15);
  EXPECT_NEAR(crps_univariate(two, 2.0), 1.25, 1e-15);
  const std::vector<double> one = {3.5};
  EXPECT_EQ(crps_univariate(one, 3.5), 0.0);
  EXPECT_DOUBLE_EQ(crps_univariate(one, 1.5), 2.0);
  EXPECT_NEAR(crps_by_integration(two, 0.5), 0.25, 1e-6);
  EXPECT_NEAR(crps_by_integration(two, 2.0), 1.25, 1e-6);
  EXPECT_THROW(crps_univariate(std::vector<double>{}, 0.0), DataError);
}

TEST(Crps, MatchesGridIntegration) {
  RngStream rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t S = 1 + rng.index(40);
    std::vector<double> samples(S);
    for (double& v : samples) v = std::round(rng.normal() * 1000.0) / 1000.0;
    const double obs = std::round(rng.normal() * 1500.0) / 1000.0;
    EXPECT_NEAR(crps_univariate(samples, obs), crps_by_integration(samples, obs), 1e-6)
        << "trial " << trial;
  }
}

TEST(Crps, ScaleEquivarianceAndPermutation) {
  RngStream rng(2);
  std::vector<double> samples(25);
  for (double& v : samples) v = rng.normal();
  const double base = crps_univariate(samples, 0.3);
  std::vector<double> scaled = samples;
  for (double& v : scaled) v = 3.0 * v + 1.0;
  EXPECT_NEAR(crps_univariate(scaled, 3.0 * 0.3 + 1.0), 3.0 * base, 1e-12);
  std::reverse(samples.begin(), samples.end());
  EXPECT_NEAR(crps_univariate(samples, 0.3), base, 1e-14);
}

TEST(CrpsSum, ReducesToUnivariateForOneDimension) {
  RngStream rng(3);
  const std::size_t S = 10, H = 4;
  std::vector<double> values(S * H);
  for (double& v : values) v = rng.normal();
  const ForecastSamples f = make_forecast(S, H, 1, values);
  const Tensor obs = Tensor::from({4, 1}, {0.1, -0.2, 0.3, 1.0});
  double expected = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    std::vector<double> column;
    for (std::size_t s = 0; s < S; ++s) column.push_back(f.at(s, h, 0));
    expected += crps_univariate(column, obs.at(h, 0));
  }
  EXPECT_NEAR(crps_sum(f, obs), expected / H, 1e-14);
}

TEST(CrpsSum, PerfectForecastAndDimensionOrder) {
  const Tensor obs = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  const ForecastSamples perfect = make_forecast(1, 2, 3, obs.values());
  EXPECT_EQ(crps_sum(perfect, obs), 0.0);
  for (double c : crps_per_dim(perfect, obs)) EXPECT_EQ(c, 0.0);

  RngStream rng(4);
  std::vector<double> values(8 * 2 * 3);
  for (double& v : values) v = rng.normal();
  const ForecastSamples f = make_forecast(8, 2, 3, values);
  // Reverse the dimension order in both forecast and observations.
  std::vector<double> swapped(values.size());
  for (std::size_t i = 0; i < values.size(); i += 3) {
    swapped[i] = values[i + 2];
    swapped[i + 1] = values[i + 1];
    swapped[i + 2] = values[i];
  }
  const Tensor obs_swapped = Tensor::from({2, 3}, {3.0, 2.0, 1.0, 6.0, 5.0, 4.0});
  EXPECT_NEAR(crps_sum(f, obs), crps_sum(make_forecast(8, 2, 3, swapped), obs_swapped), 1e-13);
  EXPECT_EQ(crps_per_dim(f, obs).size(), 3u);
  EXPECT_THROW(crps_sum(f, Tensor({3, 3})), ShapeError);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({0.0, 10.0}, 0.05), 0.5);
  EXPECT_THROW(quantile({1.0}, 1.5), RangeError);
}

TEST(Coverage, DegenerateCases) {
  const Tensor obs = Tensor::from({1, 2}, {1.0, 2.0});
  const ForecastSamples exact = make_forecast(1, 1, 2, {1.0, 2.0});
  for (const auto& [level, value] : coverage(exact, obs, kCoverageLevels)) {
    EXPECT_EQ(value, 1.0) << level;
  }
  const ForecastSamples far = make_forecast(3, 1, 2, {10.0, 11.0, 10.5, 11.5, 12.0, 12.5});
  for (const auto& [level, value] : coverage(far, obs, kCoverageLevels)) {
    EXPECT_EQ(value, 0.0) << level;
  }
}

TEST(Coverage, CalibratedGaussian) {
  const std::size_t S = 200, H = 100, D = 100;
  RngStream rng(5);
  const Tensor values = rng.normal({S, H, D});
  const ForecastSamples f{values, {}, Frequency::kHourly};
  const Tensor obs = rng.normal({H, D});
  const auto cov = coverage(f, obs, kCoverageLevels);
  EXPECT_NEAR(cov.at(0.5), 0.5, 0.05);
  EXPECT_NEAR(cov.at(0.9), 0.9, 0.05);
}

TEST(Report, JsonLayoutAndBands) {
  RngStream rng(6);
  const ForecastSamples f{rng.normal({30, 5, 2}), parse_timestamp("2021-03-01 00:00:00"),
                          Frequency::kHourly};
  const Tensor obs = rng.normal({5, 2});
  const CrpsReport report = evaluate_forecast(f, obs);
  const nlohmann::json j = report.to_json();
  EXPECT_DOUBLE_EQ(j.at("crps_sum").get<double>(), crps_sum(f, obs));
  EXPECT_EQ(j.at("crps_mean_per_dim").size(), 2u);
  EXPECT_TRUE(j.at("coverage").contains("0.5"));
  EXPECT_TRUE(j.at("coverage").contains("0.9"));
  EXPECT_EQ(j.at("n_samples"), 30);
  EXPECT_EQ(j.at("horizon"), 5);

  const nlohmann::json bands = quantile_bands(f);
  const auto& q = bands.at("quantiles");
  ASSERT_EQ(q.size(), 5u);
  for (std::size_t h = 0; h < 5; ++h) {
    for (std::size_t d = 0; d < 2; ++d) {
      double previous = -1e300;
      for (const char* key : {"0.05", "0.25", "0.5", "0.75", "0.95"}) {
        const double v = q.at(key)[h][d].get<double>();
        EXPECT_LE(previous, v);
        previous = v;
      }
    }
  }
  EXPECT_EQ(level_key(0.05), "0.05");
  EXPECT_EQ(level_key(0.5), "0.5");
}
