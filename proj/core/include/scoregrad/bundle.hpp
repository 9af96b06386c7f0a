#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregrad/model.hpp"

namespace scoregrad {

inline constexpr const char* kVersion = "0.1.0";

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Parameter table: magic "SGPARAMS", u32 format version, u64 entry count,
/// then per entry u32 name length, name bytes, u32 rank, u64 extents and
/// float64 values. All integers and floats are little-endian.
void write_param_table(std::ostream& out, std::span<const NamedTensor> table);
std::vector<NamedTensor> read_param_table(std::istream& in);
void write_param_table(const std::filesystem::path& path, std::span<const NamedTensor> table);
std::vector<NamedTensor> read_param_table(const std::filesystem::path& path);

std::vector<NamedTensor> export_state(std::span<Parameter* const> params);
/// Copies values into params by name; every name and shape must match.
void import_state(std::span<Parameter* const> params, std::span<const NamedTensor> table);

/// Model directory with config.json, params.bin, ema.bin and meta.json.
/// `ema` holds EMA copies of model.parameters(); buffers are written as-is.
void save_bundle(const std::filesystem::path& dir, ScoreGradModel& model,
                 std::span<const Tensor> ema, const nlohmann::json& meta);

struct LoadedBundle {
  ScoreGradModel model;
  nlohmann::json meta;
};

/// Loads the EMA weights (default) or the raw trained weights.
LoadedBundle load_bundle(const std::filesystem::path& dir, bool use_ema = true);

nlohmann::json read_json(const std::filesystem::path& path);
/// Writes `j` pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace scoregrad
