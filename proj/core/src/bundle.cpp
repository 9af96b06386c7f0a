#include "scoregrad/bundle.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "scoregrad/errors.hpp"

namespace scoregrad {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'P', 'A', 'R', 'A', 'M', 'S'};
constexpr std::uint32_t kFormat = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("parameter table: unexpected end of file");
  }
  return to_little(v);
}

}  // namespace

void write_param_table(std::ostream& out, std::span<const NamedTensor> table) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormat);
  put<std::uint64_t>(out, table.size());
  for (const NamedTensor& entry : table) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entry.name.size()));
    out.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entry.value.rank()));
    for (std::size_t extent : entry.value.shape()) put<std::uint64_t>(out, extent);
    for (double v : entry.value.data()) put<double>(out, v);
  }
  if (!out) throw Error("parameter table: write failed");
}

std::vector<NamedTensor> read_param_table(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("parameter table: bad magic");
  }
  if (const auto format = get<std::uint32_t>(in); format != kFormat) {
    throw DataError("parameter table: unsupported format " + std::to_string(format));
  }
  const auto count = get<std::uint64_t>(in);
  std::vector<NamedTensor> table;
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor entry;
    entry.name.resize(get<std::uint32_t>(in));
    if (!in.read(entry.name.data(), static_cast<std::streamsize>(entry.name.size()))) {
      throw DataError("parameter table: unexpected end of file");
    }
    Shape shape(get<std::uint32_t>(in));
    for (std::size_t& extent : shape) extent = get<std::uint64_t>(in);
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = get<double>(in);
    entry.value = Tensor(std::move(shape), std::move(values));
    table.push_back(std::move(entry));
  }
  return table;
}

void write_param_table(const std::filesystem::path& path, std::span<const NamedTensor> table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_param_table(out, table);
}

std::vector<NamedTensor> read_param_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_param_table(in);
}

std::vector<NamedTensor> export_state(std::span<Parameter* const> params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back({p->name(), p->value()});
  return out;
}

void import_state(std::span<Parameter* const> params, std::span<const NamedTensor> table) {
  if (table.size() != params.size()) {
    throw DataError("parameter table has " + std::to_string(table.size()) + " entries, model has " +
                    std::to_string(params.size()));
  }
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& e : table) by_name[e.name] = &e.value;
  for (Parameter* p : params) {
    const auto it = by_name.find(p->name());
    if (it == by_name.end()) throw DataError("parameter table: missing entry " + p->name());
    if (it->second->shape() != p->shape()) {
      throw DataError("parameter table: " + p->name() + " has shape " +
                      to_string(it->second->shape()) + ", model expects " + to_string(p->shape()));
    }
    p->value() = *it->second;
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

void save_bundle(const std::filesystem::path& dir, ScoreGradModel& model,
                 std::span<const Tensor> ema, const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  const std::vector<Parameter*> params = model.parameters();
  const std::vector<Parameter*> state = model.state();
  if (ema.size() != params.size()) throw ShapeError("save_bundle: EMA count mismatch");
  std::vector<NamedTensor> raw = export_state(state);
  std::vector<NamedTensor> averaged = raw;
  for (std::size_t k = 0; k < ema.size(); ++k) {
    if (ema[k].shape() != raw[k].value.shape()) {
      throw ShapeError("save_bundle: EMA shape mismatch for " + raw[k].name);
    }
    averaged[k].value = ema[k];
  }
  write_json(dir / "config.json", model.config().to_json());
  write_param_table(dir / "params.bin", raw);
  write_param_table(dir / "ema.bin", averaged);
  write_json(dir / "meta.json", meta);
}

LoadedBundle load_bundle(const std::filesystem::path& dir, bool use_ema) {
  if (!std::filesystem::is_directory(dir)) throw DataError("model bundle not found: " + dir.string());
  const ModelConfig config = ModelConfig::from_json(read_json(dir / "config.json"));
  LoadedBundle bundle{ScoreGradModel(config, 0), nlohmann::json::object()};
  const auto table = read_param_table(dir / (use_ema ? "ema.bin" : "params.bin"));
  import_state(bundle.model.state(), table);
  if (std::filesystem::exists(dir / "meta.json")) bundle.meta = read_json(dir / "meta.json");
  return bundle;
}

}  // namespace scoregrad
