#pragma once

#include "fnocg/common.hpp"
#include "fnocg/covariance.hpp"
#include "fnocg/grid_model.hpp"
#include "fnocg/observation.hpp"

#include <Eigen/Eigenvalues>

#include <concepts>
#include <memory>
#include <vector>

namespace fnocg {

/// Everything the quadratic 4D-Var cost needs. The covariance is shared so
/// that many problems with the same B do not duplicate the factorizations.
struct VarProblem {
  GridConfig grid;
  std::shared_ptr<const CovarianceModel> cov;
  ObsSet obs;
  StateVector background;

  void validate() const {
    grid.validate();
    require(cov != nullptr, "VarProblem: missing covariance");
    require_size(cov->size(), grid.n_x, "VarProblem covariance");
    require_size(background.size(), grid.n_x, "VarProblem background");
    require(obs.config.n_x == grid.n_x && obs.config.n_steps == grid.n_steps,
            "VarProblem: observation config does not match grid");
    for (const auto& [k, y] : obs.values) {
      require(obs.config.is_observation_time(k), "VarProblem: observation at non-observation time");
      require_size(y.size(), obs.config.n_space, "VarProblem observation vector");
    }
  }
};

namespace detail {

/// Backward adjoint sweep: returns sum_k G_k^T R^{-1} w_k where w_k are the
/// observation-space vectors supplied by `obs_weight(k, u_k)` for each
/// observation time, and `traj` holds the forward states.
template <typename ObsWeight>
StateVector adjoint_accumulate(const VarProblem& p, const Trajectory& traj, ObsWeight&& obs_weight) {
  const int n_steps = p.grid.n_steps;
  StateVector lambda = StateVector::Zero(p.grid.n_x);
  for (int k = n_steps; k >= 0; --k) {
    if (p.obs.values.contains(k)) {
      const Eigen::VectorXd w = obs_weight(k, traj[static_cast<std::size_t>(k)]);
      lambda += apply_h_transpose(p.cov->r_inv() * w, p.obs.config);
    }
    if (k > 0) lambda = step_adjoint(lambda, p.grid);
  }
  return lambda;
}

}  // namespace detail

/// J(u0) = 1/2 |u0 - ub|^2_{B^-1} + 1/2 sum_k |H u_k - y_k|^2_{R^-1}.
inline double cost(const VarProblem& p, const StateVector& u0) {
  require_size(u0.size(), p.grid.n_x, "cost");
  const StateVector dx = u0 - p.background;
  double j = 0.5 * dx.dot(p.cov->apply_b_inverse(dx));
  if (p.obs.empty()) return j;
  const Trajectory traj = propagate(u0, p.grid);
  for (const auto& [k, y] : p.obs.values) {
    const Eigen::VectorXd misfit = apply_h(traj[static_cast<std::size_t>(k)], p.obs.config) - y;
    j += 0.5 * p.cov->r_inv() * misfit.squaredNorm();
  }
  return j;
}

/// Adjoint gradient: B^{-1}(u0 - ub) - sum_k G_k^T R^{-1} d_k with
/// innovations d_k = y_k - H u_k.
inline StateVector gradient(const VarProblem& p, const StateVector& u0) {
  require_size(u0.size(), p.grid.n_x, "gradient");
  StateVector g = p.cov->apply_b_inverse(u0 - p.background);
  if (p.obs.empty()) return g;
  const Trajectory traj = propagate(u0, p.grid);
  g -= detail::adjoint_accumulate(p, traj, [&](int k, const StateVector& uk) -> Eigen::VectorXd {
    return p.obs.values.at(k) - apply_h(uk, p.obs.config);
  });
  return g;
}

/// f = -grad J(0), the right-hand side of the Hessian system.
inline StateVector rhs_f(const VarProblem& p) { return -gradient(p, StateVector::Zero(p.grid.n_x)); }

/// f = B^{-1} ub + sum_k G_k^T R^{-1} y_k, evaluated term by term with explicit
/// products of M^T rather than a single backward sweep.
inline StateVector rhs_f_direct(const VarProblem& p) {
  StateVector f = p.cov->apply_b_inverse(p.background);
  for (const auto& [k, y] : p.obs.values) {
    StateVector term = apply_h_transpose(p.cov->r_inv() * y, p.obs.config);
    for (int s = 0; s < k; ++s) term = step_adjoint(term, p.grid);
    f += term;
  }
  return f;
}

/// Matrix-free grad^2 J = B^{-1} + sum_k G_k^T R^{-1} G_k.
class HessianOperator {
 public:
  explicit HessianOperator(const VarProblem& problem) : p_(&problem) {}

  int size() const { return p_->grid.n_x; }
  const VarProblem& problem() const { return *p_; }

  StateVector apply(const StateVector& v) const {
    require_size(v.size(), size(), "hessian_vec");
    StateVector out = p_->cov->apply_b_inverse(v);
    if (p_->obs.empty()) return out;
    // Forward only as far as the last observation time.
    const int last = p_->obs.values.rbegin()->first;
    const Trajectory traj = propagate(v, p_->grid, last);
    StateVector lambda = StateVector::Zero(size());
    for (int k = last; k >= 0; --k) {
      if (p_->obs.values.contains(k)) {
        lambda += apply_h_transpose(p_->cov->r_inv() * apply_h(traj[static_cast<std::size_t>(k)], p_->obs.config),
                                    p_->obs.config);
      }
      if (k > 0) lambda = step_adjoint(lambda, p_->grid);
    }
    return out + lambda;
  }

  StateVector operator()(const StateVector& v) const { return apply(v); }

 private:
  const VarProblem* p_;
};

inline StateVector hessian_vec(const HessianOperator& h, const StateVector& v) { return h.apply(v); }

/// Anything usable as the system operator in cg_solve.
template <typename Op>
concept LinearOperator = requires(const Op& op, const StateVector& v) {
  { op.size() } -> std::convertible_to<int>;
  { op.apply(v) } -> std::convertible_to<StateVector>;
};

struct CgSettings {
  double rel_tol = 1e-6;
  int max_iter = 300;
};

struct CgResult {
  StateVector solution;
  int n_iterations = 0;
  std::vector<double> residual_history;  // |r_i| / |f| after each loop iteration
  bool converged = false;

  double final_relative_residual() const {
    return residual_history.empty() ? initial_relative_residual : residual_history.back();
  }
  double initial_relative_residual = 0.0;
};

/// Unpreconditioned conjugate gradients on A x = f from x0. The observer is
/// called with (iteration, x) for the initial iterate and after every update.
/// n_iterations counts operator applications inside the loop; the initial
/// residual's application is not counted.
template <LinearOperator Op, typename Observer>
CgResult cg_solve(const Op& a, const StateVector& f, const StateVector& x0, const CgSettings& s,
                  Observer&& observe) {
  require(s.rel_tol > 0.0, "cg_solve: rel_tol must be positive");
  require(s.max_iter >= 1, "cg_solve: max_iter must be >= 1");
  require_size(f.size(), a.size(), "cg_solve rhs");
  require_size(x0.size(), a.size(), "cg_solve initial guess");
  if (!f.allFinite() || !x0.allFinite()) throw NumericalError("cg_solve: non-finite input");

  CgResult res;
  res.solution = x0;
  const double f_norm = f.norm();
  if (f_norm == 0.0) {
    res.solution.setZero();
    res.converged = true;
    observe(0, res.solution);
    return res;
  }

  StateVector& x = res.solution;
  StateVector r = f - a.apply(x);
  double rr = r.squaredNorm();
  res.initial_relative_residual = std::sqrt(rr) / f_norm;
  observe(0, x);
  if (res.initial_relative_residual <= s.rel_tol) {
    res.converged = true;
    return res;
  }
  StateVector p = r;
  while (res.n_iterations < s.max_iter) {
    const StateVector q = a.apply(p);
    ++res.n_iterations;
    const double pq = p.dot(q);
    if (!std::isfinite(pq) || pq <= 0.0) {
      throw NumericalError("cg_solve: operator not positive definite (p.Ap = " + std::to_string(pq) +
                           ") at iteration " + std::to_string(res.n_iterations));
    }
    const double alpha = rr / pq;
    x += alpha * p;
    r -= alpha * q;
    const double rr_new = r.squaredNorm();
    if (!std::isfinite(rr_new) || !x.allFinite()) {
      throw NumericalError("cg_solve: non-finite iterate at iteration " + std::to_string(res.n_iterations));
    }
    const double rel = std::sqrt(rr_new) / f_norm;
    res.residual_history.push_back(rel);
    observe(res.n_iterations, x);
    if (rel <= s.rel_tol) {
      res.converged = true;
      break;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return res;
}

template <LinearOperator Op>
CgResult cg_solve(const Op& a, const StateVector& f, const StateVector& x0, const CgSettings& s) {
  return cg_solve(a, f, x0, s, [](int, const StateVector&) {});
}

inline constexpr int kDenseGuard = 2048;

/// Column j is the operator applied to e_j; returned symmetrized after the
/// asymmetry check.
template <LinearOperator Op>
Matrix assemble_dense(const Op& a, double asym_tol = 1e-10) {
  const int n = a.size();
  require(n <= kDenseGuard, "assemble_dense: dimension exceeds dense guard");
  Matrix m(n, n);
  StateVector e = StateVector::Zero(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    m.col(j) = a.apply(e);
    e[j] = 0.0;
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > asym_tol * scale) {
    throw NumericalError("assemble_dense: operator asymmetry " + std::to_string(asym));
  }
  return 0.5 * (m + m.transpose());
}

inline Matrix assemble_dense_hessian(const HessianOperator& h) { return assemble_dense(h); }

/// lambda_max / lambda_min of a symmetric matrix.
inline double condition_number(const Matrix& sym) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("condition_number: eigensolver failed");
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 0.0)) {
    throw NumericalError("condition_number: operator not positive definite (lambda_min = " +
                         std::to_string(lmin) + ")");
  }
  return lmax / lmin;
}

template <LinearOperator Op>
double condition_number(const Op& a) {
  return condition_number(assemble_dense(a));
}

}  // namespace fnocg
