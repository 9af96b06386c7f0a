#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scoregrad/bundle.hpp"
#include "scoregrad/data.hpp"
#include "scoregrad/errors.hpp"
#include "scoregrad/metrics.hpp"
#include "scoregrad/parallel.hpp"
#include "scoregrad/sampling.hpp"
#include "scoregrad/sde.hpp"
#include "scoregrad/training.hpp"

namespace scoregrad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Output locations are supplied anew on replay, and results do not depend
// on the thread count.
bool excluded_from_record(const std::string& name) {
  return name == "out" || name == "bands" || name == "threads";
}

/// The command name and every resolved option value, enough to rerun it.
json run_record(const CLI::App& sub) {
  json options = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || excluded_from_record(name)) continue;
    std::string value;
    if (opt->count() > 0) {
      for (const std::string& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    if (!value.empty()) options[name] = value;
  }
  return {{"command", sub.get_name()}, {"options", std::move(options)}};
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json data_summary(const std::string& path, const Dataset& data) {
  return {{"path", path},
          {"fingerprint", hex(data.fingerprint())},
          {"rows", data.length()},
          {"dims", data.dims()}};
}

struct SamplerFlags {
  std::string predictor;
  std::string corrector = "langevin";
  std::size_t steps = 0;
  std::size_t corrector_steps = 1;
  double snr = 0.16;

  void add(CLI::App& app, bool with_steps = true) {
    app.add_option("--predictor", predictor,
                   "euler_maruyama, reverse_diffusion, ancestral or none (default reverse_diffusion)");
    app.add_option("--corrector", corrector, "langevin or none");
    if (with_steps) {
      app.add_option("--steps", steps, "Diffusion steps N (default 100, 180 for subVP)");
    }
    app.add_option("--corrector-steps", corrector_steps, "Corrector steps M per predictor step");
    app.add_option("--snr", snr, "Corrector signal-to-noise ratio r");
  }

  SamplerConfig resolve(const SdeSpec& sde) const {
    SamplerConfig c = SamplerConfig::defaults_for(sde.kind());
    if (!predictor.empty()) c.predictor = parse_predictor(predictor);
    c.corrector = parse_corrector(corrector);
    if (steps != 0) c.steps = steps;
    c.corrector_steps = c.corrector == CorrectorKind::kNone ? 0 : corrector_steps;
    c.snr = snr;
    c.validate(sde);
    return c;
  }
};

struct ModelFlags {
  std::string model;
  std::string data;
  std::string weights = "ema";
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  void add(CLI::App& app) {
    app.add_option("--model", model, "Model bundle directory")->required();
    app.add_option("--data", data, "CSV file with a timestamp column and D value columns")
        ->required();
    app.add_option("--weights", weights, "ema or raw");
    app.add_option("--samples", samples, "Sample trajectories S");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");
  }

  /// Reads only config.json, so flag errors surface before any loading.
  ModelConfig peek_config() const {
    if (weights != "ema" && weights != "raw") {
      throw ConfigError("--weights must be ema or raw");
    }
    if (samples == 0) throw ConfigError("--samples must be >= 1");
    const fs::path config = fs::path(model) / "config.json";
    if (!fs::exists(config)) throw ConfigError("no model bundle at " + model);
    return ModelConfig::from_json(read_json(config));
  }

  LoadedBundle load_model() const { return load_bundle(model, weights == "ema"); }

  Dataset load_data(const ModelConfig& config) const {
    Dataset d = load_csv(data, config.dataset.freq);
    if (d.dims() != config.target_dim) {
      throw DataError("data has " + std::to_string(d.dims()) + " columns but the model expects " +
                      std::to_string(config.target_dim));
    }
    return d;
  }
};

/// Held-out evaluation: forecast the last prediction-length block of the
/// data from the preceding history.
struct TestSplit {
  std::size_t origin = 0;
  std::size_t horizon = 0;
  Tensor observations;
};

TestSplit test_split(const Dataset& data, std::size_t prediction) {
  if (data.length() <= prediction) {
    throw DataError("data has " + std::to_string(data.length()) +
                    " rows, too few for a test block of " + std::to_string(prediction));
  }
  TestSplit s;
  s.origin = test_split_start(data, prediction);
  s.horizon = prediction;
  s.observations = data.slice(s.origin, data.length()).values;
  return s;
}

double crps_on_split(const ScoreGradModel& model, const Dataset& data, const TestSplit& split,
                     const ModelFlags& flags, const SamplerConfig& sampler, std::uint64_t seed) {
  const ForecastRequest request{split.origin, split.horizon, flags.samples, seed, flags.threads};
  return crps_sum(forecast(model, data, request, sampler), split.observations);
}

fs::path bands_path_for(const fs::path& out) {
  fs::path p = out;
  return p.replace_extension(".bands.json");
}

void print_value(std::ostream& out, const std::string& label, double v) {
  out << label << ' ' << json(v).dump() << '\n';
}

// -------------------------------------------------------------------- train

struct TrainFlags {
  std::string data;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t threads = 0;
};

int cmd_train(const TrainFlags& f, const json& record, std::ostream& out) {
  const json raw = read_json(f.config);
  if (!raw.contains("dataset")) throw ConfigError("config: missing \"dataset\" section");
  const DatasetConfig dataset = DatasetConfig::from_json(raw.at("dataset"));
  const Dataset data = load_csv(f.data, dataset.freq);
  ModelConfig config = ModelConfig::from_json(raw, data.dims());
  config.train.seed = f.seed;
  if (f.epochs != 0) config.train.epochs = f.epochs;
  const std::size_t P = config.dataset.prediction_length;
  if (data.length() <= P) throw DataError("data too short for a held-out block");

  bool sigma_max_from_data = false;
  if (config.sde.kind() == SdeKind::kVE &&
      !(raw.contains("sde") && raw.at("sde").contains("sigma_max"))) {
    const double d = max_pairwise_distance(data.slice(0, data.length() - P).values);
    if (!(d > config.sde.sigma_min())) {
      throw ConfigError("VE: training targets too concentrated to derive sigma_max; set it");
    }
    config.sde = SdeSpec::ve(config.sde.sigma_min(), d, config.sde.horizon());
    sigma_max_from_data = true;
  }

  ScoreGradModel model(config, f.seed);
  fs::create_directories(f.out);
  std::ofstream log(fs::path(f.out) / "train_log.jsonl");
  if (!log) throw DataError("cannot write to " + f.out);
  const TrainResult result = train(model, data, {WindowSampler::kHoldOut, &log});

  json meta = {{"version", kVersion},
               {"seed", f.seed},
               {"data", data_summary(f.data, data)},
               {"sigma_max_from_data", sigma_max_from_data},
               {"final_loss", result.history.empty() ? 0.0 : result.history.back().loss},
               {"run", record}};
  save_bundle(f.out, model, result.ema, meta);
  out << "trained " << result.history.size() << " epochs; bundle written to " << f.out << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- forecast

struct ForecastFlags {
  ModelFlags model;
  SamplerFlags sampler;
  std::size_t horizon = 0;
  long long origin = -1;
  std::string out;
  std::string bands;
};

int cmd_forecast(const ForecastFlags& f, const json& record, std::ostream& out) {
  const ModelConfig peek = f.model.peek_config();
  const SamplerConfig sampler = f.sampler.resolve(peek.sde);
  const LoadedBundle bundle = f.model.load_model();
  const Dataset data = f.model.load_data(peek);
  const std::size_t origin = f.origin < 0 ? data.length() : static_cast<std::size_t>(f.origin);
  if (origin > data.length()) throw ConfigError("--origin lies past the end of the data");
  const std::size_t horizon = f.horizon == 0 ? peek.dataset.prediction_length : f.horizon;

  const ForecastRequest request{origin, horizon, f.model.samples, f.model.seed, f.model.threads};
  const ForecastSamples samples = forecast(bundle.model, data, request, sampler);
  json j = samples.to_json();
  j["sampler"] = sampler.to_json();
  j["run"] = record;
  write_json(f.out, j);
  json bands = quantile_bands(samples);
  bands["start_timestamp"] = format_timestamp(samples.start);
  bands["freq"] = std::string(to_string(samples.freq));
  const fs::path bands_path = f.bands.empty() ? bands_path_for(f.out) : fs::path(f.bands);
  write_json(bands_path, bands);
  out << "wrote " << samples.samples() << "x" << horizon << "x" << samples.dims()
      << " samples to " << f.out << " and bands to " << bands_path.string() << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateFlags {
  ModelFlags model;
  SamplerFlags sampler;
  std::size_t runs = 1;
  std::string out;
};

int cmd_evaluate(const EvaluateFlags& f, const json& record, std::ostream& out) {
  const ModelConfig peek = f.model.peek_config();
  const SamplerConfig sampler = f.sampler.resolve(peek.sde);
  if (f.runs == 0) throw ConfigError("--runs must be >= 1");
  const LoadedBundle bundle = f.model.load_model();
  const Dataset data = f.model.load_data(peek);
  const TestSplit split = test_split(data, peek.dataset.prediction_length);

  std::vector<CrpsReport> reports;
  for (std::size_t r = 0; r < f.runs; ++r) {
    // Run r uses seed + r.
    const ForecastRequest request{split.origin, split.horizon, f.model.samples, f.model.seed + r,
                                  f.model.threads};
    reports.push_back(
        evaluate_forecast(forecast(bundle.model, data, request, sampler), split.observations));
  }
  const double n = static_cast<double>(reports.size());
  std::vector<double> sums;
  for (const CrpsReport& r : reports) sums.push_back(r.crps_sum);
  const double mean = std::accumulate(sums.begin(), sums.end(), 0.0) / n;
  double var = 0.0;
  for (double s : sums) var += (s - mean) * (s - mean);
  const double sd = reports.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;

  CrpsReport avg = reports.front();
  avg.crps_sum = mean;
  for (std::size_t d = 0; d < avg.crps_per_dim.size(); ++d) {
    double s = 0.0;
    for (const CrpsReport& r : reports) s += r.crps_per_dim[d];
    avg.crps_per_dim[d] = s / n;
  }
  for (auto& [level, rate] : avg.coverage) {
    double s = 0.0;
    for (const CrpsReport& r : reports) s += r.coverage.at(level);
    rate = s / n;
  }
  const double naive = crps_sum(seasonal_naive(data, split.origin, split.horizon), split.observations);

  json j = avg.to_json();
  j["crps_sum_std"] = sd;
  j["crps_sum_runs"] = sums;
  j["runs"] = f.runs;
  j["seasonal_naive_crps_sum"] = naive;
  j["test_start_timestamp"] = format_timestamp(data.timestamps[split.origin]);
  j["sampler"] = sampler.to_json();
  j["data"] = data_summary(f.model.data, data);
  j["run"] = record;
  write_json(f.out, j);
  print_value(out, "crps_sum", mean);
  print_value(out, "crps_sum_std", sd);
  print_value(out, "seasonal_naive_crps_sum", naive);
  return kExitOk;
}

// --------------------------------------------------------- compare-samplers

struct CompareFlags {
  ModelFlags model;
  std::size_t steps = 0;
  std::size_t corrector_steps = 1;
  double snr = 0.16;
  std::string out;
};

int cmd_compare(const CompareFlags& f, const json& record, std::ostream& out) {
  const ModelConfig peek = f.model.peek_config();
  std::vector<SamplerConfig> combos;
  for (PredictorKind p : {PredictorKind::kEulerMaruyama, PredictorKind::kReverseDiffusion,
                          PredictorKind::kAncestral, PredictorKind::kNone}) {
    for (CorrectorKind c : {CorrectorKind::kLangevin, CorrectorKind::kNone}) {
      SamplerConfig s = SamplerConfig::defaults_for(peek.sde.kind());
      s.predictor = p;
      s.corrector = c;
      if (f.steps != 0) s.steps = f.steps;
      s.corrector_steps = c == CorrectorKind::kNone ? 0 : f.corrector_steps;
      s.snr = f.snr;
      try {
        s.validate(peek.sde);
      } catch (const ConfigError&) {
        if (p == PredictorKind::kAncestral || p == PredictorKind::kNone) continue;
        throw;
      }
      combos.push_back(s);
    }
  }
  const LoadedBundle bundle = f.model.load_model();
  const Dataset data = f.model.load_data(peek);
  const TestSplit split = test_split(data, peek.dataset.prediction_length);

  json rows = json::array();
  for (const SamplerConfig& s : combos) {
    const double c = crps_on_split(bundle.model, data, split, f.model, s, f.model.seed);
    rows.push_back({{"predictor", std::string(to_string(s.predictor))},
                    {"corrector", std::string(to_string(s.corrector))},
                    {"steps", s.steps},
                    {"corrector_steps", s.corrector_steps},
                    {"score_evaluations", PcSampler(peek.sde, s).evaluations()},
                    {"crps_sum", c}});
    out << to_string(s.predictor) << " + " << to_string(s.corrector) << ": " << json(c).dump()
        << '\n';
  }
  json j = {{"sde", std::string(to_string(peek.sde.kind()))},
            {"n_samples", f.model.samples},
            {"horizon", split.horizon},
            {"results", std::move(rows)},
            {"run", record}};
  write_json(f.out, j);
  return kExitOk;
}

// -------------------------------------------------------------- sweep-steps

struct SweepFlags {
  ModelFlags model;
  SamplerFlags sampler;
  std::string steps_list = "20,40,60,80,100,120,140,160,180,200,220,240,260";
  std::string out;
};

std::vector<std::size_t> parse_steps_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 2) {
      throw ConfigError("--steps-list: '" + item + "' is not an integer >= 2");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--steps-list is empty");
  return out;
}

int cmd_sweep(const SweepFlags& f, const json& record, std::ostream& out) {
  const ModelConfig peek = f.model.peek_config();
  const std::vector<std::size_t> steps = parse_steps_list(f.steps_list);
  std::vector<SamplerConfig> configs;
  for (std::size_t n : steps) {
    SamplerFlags flags = f.sampler;
    flags.steps = n;
    configs.push_back(flags.resolve(peek.sde));
  }
  const LoadedBundle bundle = f.model.load_model();
  const Dataset data = f.model.load_data(peek);
  const TestSplit split = test_split(data, peek.dataset.prediction_length);

  json rows = json::array();
  double lo = INFINITY, hi = -INFINITY;
  for (const SamplerConfig& s : configs) {
    const double c = crps_on_split(bundle.model, data, split, f.model, s, f.model.seed);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
    rows.push_back({{"steps", s.steps}, {"crps_sum", c}});
    out << "N=" << s.steps << ": " << json(c).dump() << '\n';
  }
  json j = {{"sde", std::string(to_string(peek.sde.kind()))},
            {"sampler", configs.front().to_json()},
            {"results", std::move(rows)},
            {"min_crps_sum", lo},
            {"max_crps_sum", hi},
            {"relative_spread", (hi - lo) / lo},
            {"run", record}};
  j["sampler"].erase("steps");
  write_json(f.out, j);
  return kExitOk;
}

// ----------------------------------------------------------------- sde-diag

struct DiagFlags {
  std::string sde = "all";
  std::size_t paths = 10000;
  std::size_t steps = 1000;
  std::string checkpoints = "0,0.25,0.5,1";
  double x0 = 0.0;
  double horizon = 1.0;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double sigma_min = 0.01;
  double sigma_max = 50.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sde_diag(const DiagFlags& f, const json& record, std::ostream& out) {
  std::vector<SdeKind> kinds;
  if (f.sde == "all") {
    kinds = {SdeKind::kVE, SdeKind::kVP, SdeKind::kSubVP};
  } else {
    kinds = {parse_sde_kind(f.sde)};
  }
  std::vector<double> checkpoints;
  {
    std::stringstream in(f.checkpoints);
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        checkpoints.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("--checkpoints: '" + item + "' is not a number");
      }
    }
  }
  if (f.paths < 2 || f.steps < 1) throw ConfigError("--paths must be >= 2 and --steps >= 1");
  auto make = [&](SdeKind k) {
    if (k == SdeKind::kVE) return SdeSpec::ve(f.sigma_min, f.sigma_max, f.horizon);
    if (k == SdeKind::kVP) return SdeSpec::vp(f.beta_min, f.beta_max, f.horizon);
    return SdeSpec::sub_vp(f.beta_min, f.beta_max, f.horizon);
  };
  for (SdeKind k : kinds) make(k);
  const double dt = f.horizon / static_cast<double>(f.steps);
  for (double t : checkpoints) {
    const double pos = t / dt;
    if (t < 0.0 || t > f.horizon || std::abs(pos - std::round(pos)) > 1e-9) {
      throw ConfigError("--checkpoints: " + json(t).dump() + " is not on the simulation grid");
    }
  }

  json results = json::array();
  bool all_within = true;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const SdeSpec sde = make(kinds[i]);
    const auto checks = simulate_marginals(sde, f.x0, f.paths, f.steps, checkpoints, f.seed + i);
    json rows = json::array();
    for (const MarginalCheck& c : checks) {
      // A zero analytic spread (VP at t=0) must be matched exactly.
      const bool mean_ok = std::abs(c.simulated_mean - c.mean) <= 3.0 * c.mean_se;
      const bool std_ok = std::abs(c.simulated_std - c.std) <= 3.0 * c.std_se;
      all_within = all_within && mean_ok && std_ok;
      rows.push_back({{"t", c.t},
                      {"simulated_mean", c.simulated_mean},
                      {"simulated_std", c.simulated_std},
                      {"analytic_mean", c.mean},
                      {"analytic_std", c.std},
                      {"mean_se", c.mean_se},
                      {"std_se", c.std_se},
                      {"within_3se", mean_ok && std_ok}});
      out << to_string(sde.kind()) << " t=" << c.t << " std " << c.simulated_std << " (analytic "
          << c.std << ")" << (mean_ok && std_ok ? "" : "  OUTSIDE 3 SE") << '\n';
    }
    results.push_back({{"sde", sde.to_json()}, {"checkpoints", std::move(rows)}});
  }

  const SdeSpec vp = make(SdeKind::kVP), sub = make(SdeKind::kSubVP);
  std::size_t violations = 0;
  double max_ratio = 0.0;
  for (std::size_t i = 0; i <= f.steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double a = sub.marginal(t).std, b = vp.marginal(t).std;
    if (a > b) ++violations;
    if (b > 0.0) max_ratio = std::max(max_ratio, a / b);
  }
  json j = {{"paths", f.paths},
            {"steps", f.steps},
            {"x0", f.x0},
            {"results", std::move(results)},
            {"all_within_3se", all_within},
            {"variance_ordering",
             {{"grid_points", f.steps + 1},
              {"violations", violations},
              {"max_subvp_over_vp_std", max_ratio}}},
            {"run", record}};
  write_json(f.out, j);
  out << "subVP <= VP std at " << (f.steps + 1 - violations) << "/" << (f.steps + 1)
      << " grid points\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Score-based multivariate time-series forecasting", "scoregrad"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write a bundle");
  train_cmd->add_option("--data", train_flags.data, "Training CSV")->required();
  train_cmd->add_option("--config", train_flags.config, "Model config JSON")->required();
  train_cmd->add_option("--out", train_flags.out, "Bundle directory")->required();
  train_cmd->add_option("--seed", train_flags.seed, "Random seed");
  train_cmd->add_option("--epochs", train_flags.epochs, "Override the configured epoch count");
  train_cmd->add_option("--threads", train_flags.threads, "Worker threads (0 = all cores)");

  ForecastFlags forecast_flags;
  CLI::App* forecast_cmd = app.add_subcommand("forecast", "Sample future trajectories");
  forecast_flags.model.add(*forecast_cmd);
  forecast_flags.sampler.add(*forecast_cmd);
  forecast_cmd->add_option("--horizon", forecast_flags.horizon,
                           "Forecast horizon H (default: prediction length)");
  forecast_cmd->add_option("--origin", forecast_flags.origin,
                           "Row index of the first forecast point (default: end of data)");
  forecast_cmd->add_option("--out", forecast_flags.out, "Forecast JSON")->required();
  forecast_cmd->add_option("--bands", forecast_flags.bands,
                           "Quantile band JSON (default: <out>.bands.json)");

  EvaluateFlags evaluate_flags;
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "CRPS on the held-out final block");
  evaluate_flags.model.add(*evaluate_cmd);
  evaluate_flags.sampler.add(*evaluate_cmd);
  evaluate_cmd->add_option("--runs", evaluate_flags.runs, "Independent evaluation runs");
  evaluate_cmd->add_option("--out", evaluate_flags.out, "Metrics JSON")->required();

  CompareFlags compare_flags;
  CLI::App* compare_cmd =
      app.add_subcommand("compare-samplers", "CRPS_sum for every valid predictor/corrector pair");
  compare_flags.model.add(*compare_cmd);
  compare_cmd->add_option("--steps", compare_flags.steps, "Diffusion steps N");
  compare_cmd->add_option("--corrector-steps", compare_flags.corrector_steps, "Corrector steps M");
  compare_cmd->add_option("--snr", compare_flags.snr, "Corrector signal-to-noise ratio r");
  compare_cmd->add_option("--out", compare_flags.out, "Result JSON")->required();

  SweepFlags sweep_flags;
  CLI::App* sweep_cmd = app.add_subcommand("sweep-steps", "CRPS_sum as a function of N");
  sweep_flags.model.add(*sweep_cmd);
  sweep_flags.sampler.add(*sweep_cmd, false);
  sweep_cmd->add_option("--steps-list", sweep_flags.steps_list, "Comma-separated step counts");
  sweep_cmd->add_option("--out", sweep_flags.out, "Result JSON")->required();

  DiagFlags diag_flags;
  CLI::App* diag_cmd =
      app.add_subcommand("sde-diag", "Simulated vs analytic forward marginals");
  diag_cmd->add_option("--sde", diag_flags.sde, "ve, vp, subvp or all");
  diag_cmd->add_option("--paths", diag_flags.paths, "Monte-Carlo paths");
  diag_cmd->add_option("--steps", diag_flags.steps, "Euler-Maruyama steps");
  diag_cmd->add_option("--checkpoints", diag_flags.checkpoints, "Comma-separated times");
  diag_cmd->add_option("--x0", diag_flags.x0, "Starting point");
  diag_cmd->add_option("--horizon", diag_flags.horizon, "Diffusion horizon T_s");
  diag_cmd->add_option("--beta-min", diag_flags.beta_min, "VP/subVP beta_min");
  diag_cmd->add_option("--beta-max", diag_flags.beta_max, "VP/subVP beta_max");
  diag_cmd->add_option("--sigma-min", diag_flags.sigma_min, "VE sigma_min");
  diag_cmd->add_option("--sigma-max", diag_flags.sigma_max, "VE sigma_max");
  diag_cmd->add_option("--seed", diag_flags.seed, "Random seed");
  diag_cmd->add_option("--out", diag_flags.out, "Result JSON")->required();

  std::string replay_meta, replay_out, replay_bands;
  CLI::App* replay_cmd =
      app.add_subcommand("replay", "Rerun the command recorded in a meta.json or output JSON");
  replay_cmd->add_option("--meta", replay_meta, "meta.json or any command output")->required();
  replay_cmd->add_option("--out", replay_out, "New output location")->required();
  replay_cmd->add_option("--bands", replay_bands, "New band file (forecast only)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, run_record(*train_cmd), out);
    if (*forecast_cmd) return cmd_forecast(forecast_flags, run_record(*forecast_cmd), out);
    if (*evaluate_cmd) return cmd_evaluate(evaluate_flags, run_record(*evaluate_cmd), out);
    if (*compare_cmd) return cmd_compare(compare_flags, run_record(*compare_cmd), out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, run_record(*sweep_cmd), out);
    if (*diag_cmd) return cmd_sde_diag(diag_flags, run_record(*diag_cmd), out);
    if (*replay_cmd) {
      json meta;
      try {
        meta = read_json(replay_meta);
      } catch (const DataError& e) {
        throw ConfigError(std::string("--meta: ") + e.what());
      }
      if (!meta.is_object() || !meta.contains("run")) {
        throw ConfigError(replay_meta + " has no run record");
      }
      const json& rec = meta.at("run");
      std::vector<std::string> again{rec.at("command").get<std::string>()};
      if (again.front() == "replay") throw ConfigError("cannot replay a replay record");
      for (const auto& [name, value] : rec.at("options").items()) {
        again.push_back("--" + name);
        again.push_back(value.get<std::string>());
      }
      again.insert(again.end(), {"--out", replay_out});
      if (!replay_bands.empty()) again.insert(again.end(), {"--bands", replay_bands});
      return run(again, out, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace scoregrad::cli
