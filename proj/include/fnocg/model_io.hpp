#pragma once

#include "fnocg/binary_io.hpp"
#include "fnocg/operator_net.hpp"

#include <array>
#include <fstream>
#include <map>
#include <string>

namespace fnocg {

// Model container, all integers and floats little-endian:
//   magic "FNOCGMDL" | u32 version | u32 entry count | entries...
//   entry: u8 kind | string name | payload
//     kind 0 (tensor): u32 rank | u64 dims[rank] | f64 data[prod(dims)]
//     kind 1 (text):   string value
//   string: u32 length | bytes
// Tensor data follows Eigen's column-major order; complex spectral weights
// are stored with a leading dimension of 2 (real, imaginary).

inline constexpr std::array<char, 8> kModelMagic = {'F', 'N', 'O', 'C', 'G', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

struct ModelEntry {
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
  std::string text;
  bool is_text = false;
};

inline std::map<std::string, double> model_scalars(const FnoModel& m) {
  const FnoConfig& c = m.config;
  return {
      {"config.n_modes", c.n_modes},         {"config.width", c.width},
      {"config.n_layers", c.n_layers},       {"config.hidden", c.hidden},
      {"config.lr", c.lr},                   {"config.batch_size", c.batch_size},
      {"config.n_epochs", c.n_epochs},       {"config.patience", c.patience},
      {"config.val_fraction", c.val_fraction}, {"config.seed", static_cast<double>(c.seed)},
      {"norm.f_mean", m.norm.f_mean},        {"norm.f_std", m.norm.f_std},
      {"norm.y_mean", m.norm.y_mean},        {"norm.y_std", m.norm.y_std},
  };
}

}  // namespace detail

inline void save_model(const FnoModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  FnoParams params = model.params;
  const auto tensors = params.tensors();
  const auto scalars = detail::model_scalars(model);
  const std::map<std::string, std::string> texts = {
      {"meta.activation", "gelu"}, {"meta.loss", "relative_l2"}, {"meta.input_channels", "f_standardized,x_over_xmax"}};

  out.write(kModelMagic.data(), kModelMagic.size());
  binio::put(out, kModelFormatVersion);
  binio::put(out, static_cast<std::uint32_t>(tensors.size() + scalars.size() + texts.size()));
  for (const auto& [name, value] : texts) {
    binio::put(out, std::uint8_t{1});
    binio::put_string(out, name);
    binio::put_string(out, value);
  }
  for (const auto& [name, value] : scalars) {
    binio::put(out, std::uint8_t{0});
    binio::put_string(out, name);
    binio::put(out, std::uint32_t{0});
    binio::put(out, value);
  }
  for (const auto& t : tensors) {
    binio::put(out, std::uint8_t{0});
    binio::put_string(out, t.name);
    binio::put(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) binio::put(out, d);
    binio::put_f64s(out, t.data.data(), t.data.size());
  }
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

/// Reads a model written by save_model. Throws FormatError on a bad magic,
/// unsupported version, truncation, missing tensors or shape mismatches;
/// nothing is returned unless the whole file parses.
inline FnoModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kModelMagic) {
    throw FormatError("load_model: " + path + " is not a model file");
  }
  const auto version = binio::get<std::uint32_t>(in);
  if (version != kModelFormatVersion) {
    throw FormatError("load_model: unsupported format version " + std::to_string(version));
  }
  const auto count = binio::get<std::uint32_t>(in);
  std::map<std::string, detail::ModelEntry> entries;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = binio::get<std::uint8_t>(in);
    std::string name = binio::get_string(in);
    detail::ModelEntry entry;
    if (kind == 1) {
      entry.is_text = true;
      entry.text = binio::get_string(in);
    } else if (kind == 0) {
      const auto rank = binio::get<std::uint32_t>(in);
      if (rank > 8) throw FormatError("load_model: tensor rank " + std::to_string(rank) + " too large");
      std::uint64_t total = 1;
      for (std::uint32_t r = 0; r < rank; ++r) {
        entry.shape.push_back(binio::get<std::uint64_t>(in));
        total *= entry.shape.back();
        if (total > (1ull << 32)) throw FormatError("load_model: tensor too large");
      }
      entry.data.resize(static_cast<std::size_t>(total));
      binio::get_f64s(in, entry.data.data(), entry.data.size());
    } else {
      throw FormatError("load_model: unknown entry kind " + std::to_string(kind));
    }
    entries.emplace(std::move(name), std::move(entry));
  }

  auto scalar = [&](const std::string& name) {
    const auto it = entries.find(name);
    if (it == entries.end() || it->second.is_text || !it->second.shape.empty()) {
      throw FormatError("load_model: missing scalar " + name);
    }
    return it->second.data.at(0);
  };
  FnoModel model;
  FnoConfig& c = model.config;
  c.n_modes = static_cast<int>(scalar("config.n_modes"));
  c.width = static_cast<int>(scalar("config.width"));
  c.n_layers = static_cast<int>(scalar("config.n_layers"));
  c.hidden = static_cast<int>(scalar("config.hidden"));
  c.lr = scalar("config.lr");
  c.batch_size = static_cast<int>(scalar("config.batch_size"));
  c.n_epochs = static_cast<int>(scalar("config.n_epochs"));
  c.patience = static_cast<int>(scalar("config.patience"));
  c.val_fraction = scalar("config.val_fraction");
  c.seed = static_cast<std::uint64_t>(scalar("config.seed"));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("load_model: invalid stored config: ") + e.what());
  }
  model.norm.f_mean = scalar("norm.f_mean");
  model.norm.f_std = scalar("norm.f_std");
  model.norm.y_mean = scalar("norm.y_mean");
  model.norm.y_std = scalar("norm.y_std");

  model.params = FnoParams::zeros(c);
  for (auto& t : model.params.tensors()) {
    const auto it = entries.find(t.name);
    if (it == entries.end() || it->second.is_text) throw FormatError("load_model: missing tensor " + t.name);
    if (it->second.shape != t.shape) throw FormatError("load_model: shape mismatch for tensor " + t.name);
    std::copy(it->second.data.begin(), it->second.data.end(), t.data.begin());
  }
  return model;
}

}  // namespace fnocg
