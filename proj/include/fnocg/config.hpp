#pragma once

#include "fnocg/assimilation.hpp"
#include "fnocg/datagen.hpp"
#include "fnocg/operator_net.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>

namespace fnocg {

/// Experiment configuration read from an INI-style file with sections
/// [grid], [covariance], [solver], [fno] and [dataset].
struct ExperimentConfig {
  DatasetSettings dataset;
  CgSettings solver;
  FnoConfig fno;

  void validate() const {
    dataset.grid.validate();
    require(dataset.sigma_b > 0.0 && dataset.sigma_o > 0.0, "config: sigmas must be positive");
    require(solver.rel_tol > 0.0 && solver.max_iter >= 1, "config: bad solver settings");
    fno.validate();
    fno.validate_for_grid(dataset.grid.n_x);
  }
};

/// Canonical "section.key = value" text of every setting, sorted by key.
inline std::string canonical_text(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  auto put = [&](const std::string& k, const auto& v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    kv[k] = s.str();
  };
  const auto& d = c.dataset;
  put("grid.n_x", d.grid.n_x);
  put("grid.x_max", d.grid.x_max);
  put("grid.c", d.grid.c);
  put("grid.dt", d.grid.dt);
  put("grid.n_steps", d.grid.n_steps);
  put("covariance.sigma_b", d.sigma_b);
  put("covariance.sigma_o", d.sigma_o);
  put("covariance.distance", to_string(d.distance));
  put("solver.rel_tol", c.solver.rel_tol);
  put("solver.max_iter", c.solver.max_iter);
  put("fno.n_modes", c.fno.n_modes);
  put("fno.width", c.fno.width);
  put("fno.n_layers", c.fno.n_layers);
  put("fno.hidden", c.fno.hidden);
  put("fno.lr", c.fno.lr);
  put("fno.batch_size", c.fno.batch_size);
  put("fno.n_epochs", c.fno.n_epochs);
  put("fno.patience", c.fno.patience);
  put("fno.val_fraction", c.fno.val_fraction);
  put("fno.seed", c.fno.seed);
  put("dataset.master_seed", d.master_seed);
  put("dataset.obs_noise_std", d.obs_noise_std);
  put("dataset.noise_terms", d.noise.n_terms);
  put("dataset.noise_max_wavenumber", d.noise.max_wavenumber);
  put("dataset.noise_amp_min", d.noise.amp_min);
  put("dataset.noise_amp_max", d.noise.amp_max);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// 64-bit FNV-1a, used as a stable fingerprint of configurations.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_text(c))));
  return buf;
}

/// Applies "section.key" = value. Unknown keys are rejected.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto& d = c.dataset;
  // The whole value must parse; "12abc" is rejected rather than read as 12.
  auto whole = [&](auto parse) {
    std::size_t pos = 0;
    const auto v = parse(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  };
  auto as_int = [&] { return whole([](const std::string& s, std::size_t* p) { return std::stoi(s, p); }); };
  auto as_u64 = [&] {
    if (value.find('-') != std::string::npos) throw std::invalid_argument(value);
    return static_cast<std::uint64_t>(whole([](const std::string& s, std::size_t* p) { return std::stoull(s, p); }));
  };
  auto as_double = [&] { return whole([](const std::string& s, std::size_t* p) { return std::stod(s, p); }); };
  try {
    if (key == "grid.n_x") d.grid.n_x = as_int();
    else if (key == "grid.x_max") d.grid.x_max = as_double();
    else if (key == "grid.c") d.grid.c = as_double();
    else if (key == "grid.dt") d.grid.dt = as_double();
    else if (key == "grid.n_steps") d.grid.n_steps = as_int();
    else if (key == "covariance.sigma_b") d.sigma_b = as_double();
    else if (key == "covariance.sigma_o") d.sigma_o = as_double();
    else if (key == "covariance.distance") d.distance = parse_distance_kind(value);
    else if (key == "solver.rel_tol") c.solver.rel_tol = as_double();
    else if (key == "solver.max_iter") c.solver.max_iter = as_int();
    else if (key == "fno.n_modes") c.fno.n_modes = as_int();
    else if (key == "fno.width") c.fno.width = as_int();
    else if (key == "fno.n_layers") c.fno.n_layers = as_int();
    else if (key == "fno.hidden") c.fno.hidden = as_int();
    else if (key == "fno.lr") c.fno.lr = as_double();
    else if (key == "fno.batch_size") c.fno.batch_size = as_int();
    else if (key == "fno.n_epochs") c.fno.n_epochs = as_int();
    else if (key == "fno.patience") c.fno.patience = as_int();
    else if (key == "fno.val_fraction") c.fno.val_fraction = as_double();
    else if (key == "fno.seed") c.fno.seed = as_u64();
    else if (key == "dataset.master_seed") d.master_seed = as_u64();
    else if (key == "dataset.obs_noise_std") d.obs_noise_std = as_double();
    else if (key == "dataset.noise_terms") d.noise.n_terms = as_int();
    else if (key == "dataset.noise_max_wavenumber") d.noise.max_wavenumber = as_int();
    else if (key == "dataset.noise_amp_min") d.noise.amp_min = as_double();
    else if (key == "dataset.noise_amp_max") d.noise.amp_max = as_double();
    else throw ConfigError("config: unknown key '" + key + "'");
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw;
    throw ConfigError("config: bad value '" + value + "' for " + key);
  }
}

inline ExperimentConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) set_config_value(c, section + "." + key, value.data());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return parse_config(in);
}

}  // namespace fnocg
