#pragma once

#include "fnocg/common.hpp"
#include "fnocg/grid_model.hpp"

#include <map>
#include <random>
#include <vector>

namespace fnocg {

/// Equally spaced point observations (anchored at grid index 0) taken every
/// `t_interval` steps, starting at k = 0. Station j sits at floor(j n_x / n_space),
/// i.e. j (n_x / n_space) when the count divides the grid and the nearest grid
/// point below the exact position otherwise.
struct ObsConfig {
  int n_space = 4;
  int t_interval = 1;
  int n_x = 100;
  int n_steps = 90;

  void validate() const {
    require(n_space >= 1 && n_space <= n_x, "ObsConfig: n_space out of range");
    require(t_interval >= 1, "ObsConfig: t_interval must be >= 1");
    require(n_steps >= 0, "ObsConfig: n_steps must be >= 0");
  }

  std::vector<int> indices() const {
    validate();
    std::vector<int> idx(static_cast<std::size_t>(n_space));
    for (int j = 0; j < n_space; ++j) idx[static_cast<std::size_t>(j)] = static_cast<int>(
        static_cast<long long>(j) * n_x / n_space);
    return idx;
  }

  std::vector<int> times() const {
    validate();
    std::vector<int> t;
    for (int k = 0; k <= n_steps; k += t_interval) t.push_back(k);
    return t;
  }

  bool is_observation_time(int k) const { return k >= 0 && k <= n_steps && k % t_interval == 0; }

  std::size_t observation_count() const {
    return static_cast<std::size_t>(n_space) * times().size();
  }
};

/// Observed values keyed by time step.
struct ObsSet {
  ObsConfig config;
  std::map<int, Eigen::VectorXd> values;

  bool empty() const { return values.empty(); }
};

inline Eigen::VectorXd apply_h(const StateVector& u, const ObsConfig& c) {
  require_size(u.size(), c.n_x, "apply_h");
  const auto idx = c.indices();
  Eigen::VectorXd y(c.n_space);
  for (int j = 0; j < c.n_space; ++j) y[j] = u[idx[static_cast<std::size_t>(j)]];
  return y;
}

inline StateVector apply_h_transpose(const Eigen::VectorXd& y, const ObsConfig& c) {
  require_size(y.size(), c.n_space, "apply_h_transpose");
  const auto idx = c.indices();
  StateVector u = StateVector::Zero(c.n_x);
  for (int j = 0; j < c.n_space; ++j) u[idx[static_cast<std::size_t>(j)]] = y[j];
  return u;
}

/// Samples the trajectory at every observation time; Gaussian noise is added
/// when noise_std > 0, drawn from a generator seeded with `seed`.
inline ObsSet extract_observations(const Trajectory& traj, const ObsConfig& c, double noise_std,
                                   std::uint64_t seed) {
  require(static_cast<int>(traj.size()) == c.n_steps + 1,
          "extract_observations: trajectory length must be n_steps + 1");
  require(noise_std >= 0.0, "extract_observations: negative noise_std");
  ObsSet obs{c, {}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k : c.times()) {
    Eigen::VectorXd y = apply_h(traj[static_cast<std::size_t>(k)], c);
    if (noise_std > 0.0) {
      for (Eigen::Index j = 0; j < y.size(); ++j) y[j] += noise_std * normal(rng);
    }
    obs.values.emplace(k, std::move(y));
  }
  return obs;
}

/// An ObsSet with the same configuration and no observed values.
inline ObsSet empty_observations(const ObsConfig& c) { return ObsSet{c, {}}; }

}  // namespace fnocg
