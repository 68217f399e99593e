#include "kws/model_io.hpp"

#include "kws/error.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace kws {

namespace {

constexpr char kMagic[4] = {'K', 'W', 'S', 'M'};
constexpr uint32_t kVersion = 1;

using RowMajorMatf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void put_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_f32(std::ostream& out, float v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t get_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

float get_f32(std::istream& in) {
  float v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_model(const std::string& path, const ModelParameters<float>& model) {
  if (model.layers.empty()) throw DataError("model: no layers to save");
  if (model.output_dim() !=
      static_cast<Index>(model.phoneme_inventory.size()))
    throw DataError("model: output dim != inventory size");

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("model: cannot write " + tmp);
    out.write(kMagic, 4);
    put_u32(out, kVersion);

    const FeatureConfig& fc = model.feature_config;
    put_u32(out, static_cast<uint32_t>(fc.sample_rate));
    put_u32(out, static_cast<uint32_t>(fc.frame.window_ms));
    put_u32(out, static_cast<uint32_t>(fc.frame.shift_ms));
    put_u32(out, static_cast<uint32_t>(fc.frame.num_filters));
    put_u32(out, static_cast<uint32_t>(fc.frame.fft_size));
    put_u32(out, static_cast<uint32_t>(fc.stack.left_context));
    put_u32(out, static_cast<uint32_t>(fc.stack.right_context));
    put_f32(out, fc.preemphasis);
    put_f32(out, fc.log_floor);
    put_u32(out, static_cast<uint32_t>(model.nonlinearity));

    put_u32(out, static_cast<uint32_t>(model.layers.size()));
    put_u32(out, static_cast<uint32_t>(model.layers.front().weights.cols()));
    for (const auto& l : model.layers)
      put_u32(out, static_cast<uint32_t>(l.weights.rows()));

    put_u32(out, static_cast<uint32_t>(model.phoneme_inventory.size()));
    for (const auto& name : model.phoneme_inventory) {
      put_u32(out, static_cast<uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }

    for (const auto& l : model.layers) {
      const RowMajorMatf w = l.weights;
      out.write(reinterpret_cast<const char*>(w.data()),
                static_cast<std::streamsize>(w.size() * 4));
      out.write(reinterpret_cast<const char*>(l.bias.data()),
                static_cast<std::streamsize>(l.bias.size() * 4));
    }
    if (!out) throw DataError("model: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ModelParameters<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("model: cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("model: bad magic in " + path);
  const uint32_t version = get_u32(in);
  if (version != kVersion)
    throw DataError("model: unsupported version " + std::to_string(version) +
                    " in " + path);

  ModelParameters<float> model;
  FeatureConfig& fc = model.feature_config;
  fc.sample_rate = static_cast<int>(get_u32(in));
  fc.frame.window_ms = static_cast<int>(get_u32(in));
  fc.frame.shift_ms = static_cast<int>(get_u32(in));
  fc.frame.num_filters = static_cast<int>(get_u32(in));
  fc.frame.fft_size = static_cast<int>(get_u32(in));
  fc.stack.left_context = static_cast<int>(get_u32(in));
  fc.stack.right_context = static_cast<int>(get_u32(in));
  fc.preemphasis = get_f32(in);
  fc.log_floor = get_f32(in);
  model.nonlinearity = static_cast<Nonlinearity>(get_u32(in));

  const uint32_t num_layers = get_u32(in);
  if (num_layers == 0 || num_layers > 64)
    throw DataError("model: implausible layer count in " + path);
  std::vector<Index> dims(num_layers + 1);
  for (auto& d : dims) d = static_cast<Index>(get_u32(in));

  const uint32_t inventory_size = get_u32(in);
  model.phoneme_inventory.resize(inventory_size);
  for (auto& name : model.phoneme_inventory) {
    const uint32_t len = get_u32(in);
    if (len > 256) throw DataError("model: implausible unit name in " + path);
    name.resize(len);
    in.read(name.data(), len);
  }
  if (static_cast<Index>(inventory_size) != dims.back())
    throw DataError("model: inventory size != output dim in " + path);

  model.layers.resize(num_layers);
  for (uint32_t i = 0; i < num_layers; ++i) {
    RowMajorMatf w(dims[i + 1], dims[i]);
    in.read(reinterpret_cast<char*>(w.data()),
            static_cast<std::streamsize>(w.size() * 4));
    Vec<float> b(dims[i + 1]);
    in.read(reinterpret_cast<char*>(b.data()),
            static_cast<std::streamsize>(b.size() * 4));
    model.layers[i].weights = w;
    model.layers[i].bias = std::move(b);
  }
  if (!in) throw DataError("model: truncated file " + path);
  for (size_t i = 0; i < model.layers.size(); ++i)
    if (!model.layers[i].weights.allFinite() ||
        !model.layers[i].bias.allFinite())
      throw DataError("model: non-finite values in layer " +
                      std::to_string(i) + " of " + path);
  return model;
}

}  // namespace kws
