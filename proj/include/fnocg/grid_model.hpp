#pragma once

#include "fnocg/common.hpp"

#include <vector>

namespace fnocg {

/// Periodic 1-D grid and time stepping for u_t + c u_x = 0.
struct GridConfig {
  int n_x = 100;
  double x_max = 100.0;  // m
  double c = 0.92;       // m/s
  double dt = 1.0;       // s
  int n_steps = 90;      // K

  double dx() const { return x_max / n_x; }
  double courant() const { return c * dt / dx(); }
  double window_length() const { return n_steps * dt; }

  /// Cell-centred coordinate of grid point i on [-x_max/2, x_max/2).
  double coordinate(int i) const { return -0.5 * x_max + (i + 0.5) * dx(); }

  void validate() const {
    require(n_x >= 8, "GridConfig: n_x must be >= 8");
    require(x_max > 0.0 && dt > 0.0, "GridConfig: x_max and dt must be positive");
    require(n_steps >= 1, "GridConfig: n_steps must be >= 1");
    const double nu = courant();
    require(nu > 0.0 && nu <= 1.0, "GridConfig: Courant number must lie in (0, 1]");
  }
};

/// Three-point Lax-Wendroff stencil: u'_i = a_m u_{i-1} + a_0 u_i + a_p u_{i+1}.
struct LaxWendroffStencil {
  double minus;
  double centre;
  double plus;

  explicit LaxWendroffStencil(double nu)
      : minus(0.5 * nu * (nu + 1.0)), centre(1.0 - nu * nu), plus(0.5 * nu * (nu - 1.0)) {}
};

/// Sequence u_0..u_K of states over one assimilation window.
struct Trajectory {
  std::vector<StateVector> states;

  std::size_t size() const { return states.size(); }
  const StateVector& operator[](std::size_t k) const { return states[k]; }
};

inline StateVector step_forward(const StateVector& u, const GridConfig& g) {
  require_size(u.size(), g.n_x, "step_forward");
  const LaxWendroffStencil s(g.courant());
  const int n = g.n_x;
  StateVector out(n);
  out[0] = s.minus * u[n - 1] + s.centre * u[0] + s.plus * u[1];
  for (int i = 1; i < n - 1; ++i) {
    out[i] = s.minus * u[i - 1] + s.centre * u[i] + s.plus * u[i + 1];
  }
  out[n - 1] = s.minus * u[n - 2] + s.centre * u[n - 1] + s.plus * u[0];
  return out;
}

/// M^T w for the step matrix M of step_forward; the stencil is mirrored.
inline StateVector step_adjoint(const StateVector& w, const GridConfig& g) {
  require_size(w.size(), g.n_x, "step_adjoint");
  const LaxWendroffStencil s(g.courant());
  const int n = g.n_x;
  StateVector out(n);
  out[0] = s.plus * w[n - 1] + s.centre * w[0] + s.minus * w[1];
  for (int i = 1; i < n - 1; ++i) {
    out[i] = s.plus * w[i - 1] + s.centre * w[i] + s.minus * w[i + 1];
  }
  out[n - 1] = s.plus * w[n - 2] + s.centre * w[n - 1] + s.minus * w[0];
  return out;
}

inline Trajectory propagate(const StateVector& u0, const GridConfig& g, int n_steps) {
  require_size(u0.size(), g.n_x, "propagate");
  require(n_steps >= 0, "propagate: negative step count");
  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);
  traj.states.push_back(u0);
  for (int k = 0; k < n_steps; ++k) traj.states.push_back(step_forward(traj.states.back(), g));
  return traj;
}

inline Trajectory propagate(const StateVector& u0, const GridConfig& g) {
  return propagate(u0, g, g.n_steps);
}

/// Applies the step operator `steps` times without storing intermediates.
inline StateVector advance(StateVector u, const GridConfig& g, int steps) {
  for (int k = 0; k < steps; ++k) u = step_forward(u, g);
  return u;
}

/// Dense n_x x n_x step matrix. Only for oracles and conditioning studies.
inline Matrix assemble_step_matrix(const GridConfig& g) {
  Matrix m(g.n_x, g.n_x);
  StateVector e = StateVector::Zero(g.n_x);
  for (int j = 0; j < g.n_x; ++j) {
    e[j] = 1.0;
    m.col(j) = step_forward(e, g);
    e[j] = 0.0;
  }
  return m;
}

}  // namespace fnocg
