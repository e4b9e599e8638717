#pragma once

#include "fnocg/assimilation.hpp"
#include "fnocg/binary_io.hpp"
#include "fnocg/covariance.hpp"
#include "fnocg/grid_model.hpp"
#include "fnocg/observation.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

namespace fnocg {

/// Enumerated values of the scenario grid.
struct ParameterGrid {
  static constexpr std::array<double, 3> alphas = {2.0, 4.0, 6.0};
  static constexpr std::array<double, 5> betas = {0.1, 0.3, 0.5, 0.7, 1.0};
  static constexpr std::array<double, 3> phis = {0.0, M_PI / 3.0, M_PI / 4.0};
  static constexpr std::array<int, 5> length_multiples = {5, 10, 15, 20, 25};  // times dx
  static constexpr std::array<int, 4> n_spaces = {2, 4, 6, 8};
  static constexpr std::array<int, 6> t_intervals = {1, 4, 6, 10, 15, 20};

  static constexpr int scenario_count() {
    return static_cast<int>(alphas.size() * betas.size() * phis.size() * length_multiples.size());
  }
  static constexpr int obs_config_count() { return static_cast<int>(n_spaces.size() * t_intervals.size()); }
  static constexpr int sample_count() { return scenario_count() * obs_config_count(); }
};

static_assert(ParameterGrid::scenario_count() == 225);
static_assert(ParameterGrid::obs_config_count() == 24);

enum class Window : std::uint8_t { train = 0, test = 1 };

inline const char* to_string(Window w) { return w == Window::train ? "train" : "test"; }

struct ScenarioParams {
  double alpha = 2.0;
  double beta = 0.1;
  double phi = 0.0;
  double length_scale = 5.0;  // m
  int n_space = 2;
  int t_interval = 1;
  std::uint64_t seed = 0;  // drives the perturbation eta

  bool operator==(const ScenarioParams&) const = default;
};

/// Laws of the periodic perturbation: a sum of n_terms cosines with distinct
/// integer wavenumbers in [1, max_wavenumber], amplitudes uniform in
/// [amp_min, amp_max] and phases uniform in [0, 2 pi).
struct NoiseSpec {
  int n_terms = 5;
  int max_wavenumber = 10;
  double amp_min = 0.5;
  double amp_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_terms >= 1 && n_terms <= max_wavenumber, "NoiseSpec: need 1 <= n_terms <= max_wavenumber");
    require(amp_min > 0.0 && amp_max >= amp_min, "NoiseSpec: bad amplitude range");
  }
};

/// Everything besides the scenario tuple that determines a dataset.
struct DatasetSettings {
  GridConfig grid;
  double sigma_b = 0.1;
  double sigma_o = 0.05;
  DistanceKind distance = DistanceKind::chordal;
  std::uint64_t master_seed = 0;
  double obs_noise_std = 0.0;
  NoiseSpec noise;  // seed field ignored; per-scenario seeds are derived
};

struct Sample {
  std::uint64_t id = 0;
  ScenarioParams params;
  Window window = Window::train;
  StateVector u0_true;  // truth at the start of this sample's window
  StateVector f;
  double kappa = std::numeric_limits<double>::quiet_NaN();

  bool has_kappa() const { return std::isfinite(kappa); }
};

/// u_b(x) = 0.5 + beta sin(alpha 2 pi x / x_max + phi).
inline double background_at(double x, double alpha, double beta, double phi, double x_max) {
  return 0.5 + beta * std::sin(alpha * 2.0 * M_PI * x / x_max + phi);
}

inline StateVector background(double alpha, double beta, double phi, const GridConfig& g) {
  StateVector ub(g.n_x);
  for (int i = 0; i < g.n_x; ++i) ub[i] = background_at(g.coordinate(i), alpha, beta, phi, g.x_max);
  return ub;
}

inline StateVector sample_noise(const NoiseSpec& spec, const GridConfig& g) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<int> wavenumbers(static_cast<std::size_t>(spec.max_wavenumber));
  std::iota(wavenumbers.begin(), wavenumbers.end(), 1);
  std::shuffle(wavenumbers.begin(), wavenumbers.end(), rng);
  std::uniform_real_distribution<double> amp(spec.amp_min, spec.amp_max);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  StateVector eta = StateVector::Zero(g.n_x);
  for (int m = 0; m < spec.n_terms; ++m) {
    const double k = wavenumbers[static_cast<std::size_t>(m)];
    const double a = amp(rng);
    const double psi = phase(rng);
    for (int i = 0; i < g.n_x; ++i) eta[i] += a * std::cos(2.0 * M_PI * k * g.coordinate(i) / g.x_max + psi);
  }
  eta.array() -= eta.mean();
  const double sd = std::sqrt(eta.squaredNorm() / g.n_x);
  require(sd > 0.0, "sample_noise: degenerate perturbation");
  return eta / sd;
}

inline StateVector make_true_init(const StateVector& ub, const CovarianceModel& cov, const StateVector& eta) {
  require_size(ub.size(), cov.size(), "make_true_init");
  return ub + cov.apply_b_sqrt(eta);
}

/// One CovarianceModel per length scale, built on first use.
class CovarianceCache {
 public:
  explicit CovarianceCache(const DatasetSettings& s) : s_(s) {}

  std::shared_ptr<const CovarianceModel> get(double length_scale) {
    auto& slot = models_[length_scale];
    if (!slot) {
      SoarParams p;
      p.sigma_b = s_.sigma_b;
      p.length_scale = length_scale;
      p.n_x = s_.grid.n_x;
      p.dx = s_.grid.dx();
      p.distance = s_.distance;
      slot = std::make_shared<const CovarianceModel>(build_soar(p, s_.sigma_o));
    }
    return slot;
  }

 private:
  DatasetSettings s_;
  std::map<double, std::shared_ptr<const CovarianceModel>> models_;
};

/// Scenario tuple of sample `id` in the enumeration order
/// (alpha, beta, phi, L, n_space, t_interval), t_interval fastest.
inline ScenarioParams scenario_for_index(std::uint64_t id, const DatasetSettings& s) {
  using G = ParameterGrid;
  require(id < static_cast<std::uint64_t>(G::sample_count()), "scenario_for_index: id out of range");
  auto rest = id;
  const auto it = rest % G::t_intervals.size();
  rest /= G::t_intervals.size();
  const auto isp = rest % G::n_spaces.size();
  rest /= G::n_spaces.size();
  const std::uint64_t scenario = rest;
  const auto il = rest % G::length_multiples.size();
  rest /= G::length_multiples.size();
  const auto ip = rest % G::phis.size();
  rest /= G::phis.size();
  const auto ib = rest % G::betas.size();
  rest /= G::betas.size();
  const auto ia = rest;
  ScenarioParams p;
  p.alpha = G::alphas[ia];
  p.beta = G::betas[ib];
  p.phi = G::phis[ip];
  p.length_scale = G::length_multiples[il] * s.grid.dx();
  p.n_space = G::n_spaces[isp];
  p.t_interval = G::t_intervals[it];
  // All observation layouts of one scenario share the same true state.
  p.seed = derive_seed(s.master_seed, scenario);
  return p;
}

inline std::uint64_t observation_seed(const Sample& smp, const DatasetSettings& s) {
  return derive_seed(s.master_seed ^ 0x6f62736e6f697365ULL, 2 * smp.id + static_cast<std::uint64_t>(smp.window));
}

/// Rebuilds the 4D-Var problem a sample was generated from: observations are
/// taken along the trajectory started from the sample's truth and the
/// background is the analytic u_b in both windows.
inline VarProblem build_problem(const Sample& smp, const DatasetSettings& s, CovarianceCache& covs) {
  VarProblem p;
  p.grid = s.grid;
  p.cov = covs.get(smp.params.length_scale);
  p.background = background(smp.params.alpha, smp.params.beta, smp.params.phi, s.grid);
  ObsConfig oc{smp.params.n_space, smp.params.t_interval, s.grid.n_x, s.grid.n_steps};
  p.obs = extract_observations(propagate(smp.u0_true, s.grid), oc, s.obs_noise_std, observation_seed(smp, s));
  p.validate();
  return p;
}

/// Truth at the start of the training window, u_b + B^{1/2} eta.
inline StateVector initial_truth(const ScenarioParams& p, const DatasetSettings& s, CovarianceCache& covs) {
  NoiseSpec ns = s.noise;
  ns.seed = p.seed;
  const StateVector eta = sample_noise(ns, s.grid);
  return make_true_init(background(p.alpha, p.beta, p.phi, s.grid), *covs.get(p.length_scale), eta);
}

/// For the test window the truth is advanced through the first window, so
/// the target is u(T) = M^K u0_true.
inline Sample generate_sample(std::uint64_t id, const ScenarioParams& p, Window window, const DatasetSettings& s,
                              CovarianceCache& covs) {
  s.grid.validate();
  Sample smp;
  smp.id = id;
  smp.params = p;
  smp.window = window;
  smp.u0_true = initial_truth(p, s, covs);
  if (window == Window::test) smp.u0_true = advance(smp.u0_true, s.grid, s.grid.n_steps);
  smp.f = rhs_f(build_problem(smp, s, covs));
  return smp;
}

inline Sample generate_sample(std::uint64_t id, Window window, const DatasetSettings& s, CovarianceCache& covs) {
  return generate_sample(id, scenario_for_index(id, s), window, s, covs);
}

// ---------------------------------------------------------------------------
// Dataset files

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

inline void write_sample(std::ostream& out, const Sample& smp) {
  using namespace binio;
  put(out, kDatasetFormatVersion);
  put(out, static_cast<std::uint32_t>(smp.u0_true.size()));
  put(out, static_cast<std::uint8_t>(smp.window));
  put(out, smp.id);
  put(out, smp.params.alpha);
  put(out, smp.params.beta);
  put(out, smp.params.phi);
  put(out, smp.params.length_scale);
  put(out, static_cast<std::uint32_t>(smp.params.n_space));
  put(out, static_cast<std::uint32_t>(smp.params.t_interval));
  put(out, smp.params.seed);
  put(out, smp.kappa);
  put_f64s(out, smp.u0_true.data(), static_cast<std::size_t>(smp.u0_true.size()));
  put_f64s(out, smp.f.data(), static_cast<std::size_t>(smp.f.size()));
}

/// Reads one record; returns false at a clean end of file.
inline bool read_sample(std::istream& in, Sample& smp) {
  using namespace binio;
  if (in.peek() == std::char_traits<char>::eof()) return false;
  const auto version = get<std::uint32_t>(in);
  if (version != kDatasetFormatVersion) {
    throw FormatError("dataset: unsupported record version " + std::to_string(version));
  }
  const auto n = get<std::uint32_t>(in);
  if (n < 8 || n > (1u << 24)) throw FormatError("dataset: implausible n_x " + std::to_string(n));
  const auto w = get<std::uint8_t>(in);
  if (w > 1) throw FormatError("dataset: bad window tag");
  smp.window = static_cast<Window>(w);
  smp.id = get<std::uint64_t>(in);
  smp.params.alpha = get<double>(in);
  smp.params.beta = get<double>(in);
  smp.params.phi = get<double>(in);
  smp.params.length_scale = get<double>(in);
  smp.params.n_space = static_cast<int>(get<std::uint32_t>(in));
  smp.params.t_interval = static_cast<int>(get<std::uint32_t>(in));
  smp.params.seed = get<std::uint64_t>(in);
  smp.kappa = get<double>(in);
  smp.u0_true.resize(n);
  smp.f.resize(n);
  get_f64s(in, smp.u0_true.data(), n);
  get_f64s(in, smp.f.data(), n);
  return true;
}

inline void write_samples(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& s : samples) write_sample(out, s);
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::vector<Sample> read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Sample> out;
  Sample s;
  while (read_sample(in, s)) out.push_back(s);
  return out;
}

inline nlohmann::json settings_to_json(const DatasetSettings& s) {
  nlohmann::json j;
  j["grid"] = {{"n_x", s.grid.n_x}, {"x_max", s.grid.x_max}, {"c", s.grid.c}, {"dt", s.grid.dt},
               {"n_steps", s.grid.n_steps}};
  j["covariance"] = {{"sigma_b", s.sigma_b}, {"sigma_o", s.sigma_o}, {"distance", to_string(s.distance)}};
  j["master_seed"] = s.master_seed;
  j["obs_noise_std"] = s.obs_noise_std;
  j["noise"] = {{"n_terms", s.noise.n_terms}, {"max_wavenumber", s.noise.max_wavenumber},
                {"amp_min", s.noise.amp_min}, {"amp_max", s.noise.amp_max}};
  return j;
}

inline DatasetSettings settings_from_json(const nlohmann::json& j) {
  DatasetSettings s;
  const auto& g = j.at("grid");
  s.grid.n_x = g.at("n_x");
  s.grid.x_max = g.at("x_max");
  s.grid.c = g.at("c");
  s.grid.dt = g.at("dt");
  s.grid.n_steps = g.at("n_steps");
  const auto& c = j.at("covariance");
  s.sigma_b = c.at("sigma_b");
  s.sigma_o = c.at("sigma_o");
  s.distance = parse_distance_kind(c.at("distance").get<std::string>());
  s.master_seed = j.at("master_seed");
  s.obs_noise_std = j.at("obs_noise_std");
  const auto& n = j.at("noise");
  s.noise.n_terms = n.at("n_terms");
  s.noise.max_wavenumber = n.at("max_wavenumber");
  s.noise.amp_min = n.at("amp_min");
  s.noise.amp_max = n.at("amp_max");
  return s;
}

struct DatasetPaths {
  std::filesystem::path dir;
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path samples(Window w) const { return dir / (std::string(to_string(w)) + ".bin"); }
};

struct Dataset {
  DatasetSettings settings;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Enumerates the full scenario grid for both windows and writes
/// train.bin, test.bin and manifest.json into `dir`. Refuses to overwrite an
/// existing manifest unless `overwrite` is set.
inline Dataset generate_dataset(const DatasetSettings& s, const std::filesystem::path& dir, bool overwrite = false,
                                std::uint64_t limit = 0) {
  s.grid.validate();
  const DatasetPaths paths{dir};
  std::filesystem::create_directories(dir);
  if (std::filesystem::exists(paths.manifest()) && !overwrite) {
    throw std::runtime_error("generate_dataset: " + paths.manifest().string() + " already exists");
  }
  const auto total = static_cast<std::uint64_t>(ParameterGrid::sample_count());
  const std::uint64_t count = limit == 0 ? total : std::min(limit, total);
  CovarianceCache covs(s);
  Dataset ds;
  ds.settings = s;
  nlohmann::json tuples = nlohmann::json::array();
  for (std::uint64_t id = 0; id < count; ++id) {
    const ScenarioParams p = scenario_for_index(id, s);
    ds.train.push_back(generate_sample(id, p, Window::train, s, covs));
    ds.test.push_back(generate_sample(id, p, Window::test, s, covs));
    tuples.push_back({id, p.alpha, p.beta, p.phi, p.length_scale, p.n_space, p.t_interval, p.seed});
  }
  write_samples(paths.samples(Window::train).string(), ds.train);
  write_samples(paths.samples(Window::test).string(), ds.test);

  nlohmann::json m;
  m["format_version"] = kDatasetFormatVersion;
  m["settings"] = settings_to_json(s);
  m["scenario_count"] = ParameterGrid::scenario_count();
  m["obs_config_count"] = ParameterGrid::obs_config_count();
  m["windows"] = {{"train", {{"file", "train.bin"}, {"count", ds.train.size()}}},
                  {"test", {{"file", "test.bin"}, {"count", ds.test.size()}}}};
  m["sample_fields"] = {"id", "alpha", "beta", "phi", "length_scale", "n_space", "t_interval", "seed"};
  m["samples"] = std::move(tuples);
  std::ofstream out(paths.manifest());
  if (!out) throw std::runtime_error("cannot write " + paths.manifest().string());
  out << m.dump(1) << '\n';
  return ds;
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(DatasetPaths{dir}.manifest());
  if (!in) throw std::runtime_error("cannot open manifest in " + dir.string());
  nlohmann::json m = nlohmann::json::parse(in);
  if (m.at("format_version").get<std::uint32_t>() != kDatasetFormatVersion) {
    throw FormatError("manifest: unsupported format version");
  }
  return m;
}

inline Dataset load_dataset(const std::filesystem::path& dir, bool with_train = true, bool with_test = true) {
  const DatasetPaths paths{dir};
  Dataset ds;
  ds.settings = settings_from_json(read_manifest(dir).at("settings"));
  if (with_train) ds.train = read_samples(paths.samples(Window::train).string());
  if (with_test) ds.test = read_samples(paths.samples(Window::test).string());
  return ds;
}

}  // namespace fnocg
