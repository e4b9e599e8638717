#pragma once

#include "fnocg/common.hpp"

#include <Eigen/Eigenvalues>

#include <string>

namespace fnocg {

/// How D_ij is measured between grid points i and j.
enum class DistanceKind {
  chordal,   // straight-line distance between points on the periodic circle
  periodic,  // shortest arc, min(|i-j|, n-|i-j|) dx
  absolute,  // |i-j| dx, ignores periodicity
};

inline DistanceKind parse_distance_kind(const std::string& s) {
  if (s == "chordal") return DistanceKind::chordal;
  if (s == "periodic") return DistanceKind::periodic;
  if (s == "absolute") return DistanceKind::absolute;
  throw ConfigError("unknown distance kind '" + s + "'");
}

inline const char* to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::chordal: return "chordal";
    case DistanceKind::periodic: return "periodic";
    case DistanceKind::absolute: return "absolute";
  }
  return "?";
}

struct SoarParams {
  double sigma_b = 0.1;
  double length_scale = 5.0;  // m
  int n_x = 100;
  double dx = 1.0;  // m
  DistanceKind distance = DistanceKind::chordal;

  void validate() const {
    require(sigma_b > 0.0, "SoarParams: sigma_b must be positive");
    require(length_scale > 0.0, "SoarParams: length_scale must be positive");
    require(n_x >= 1 && dx > 0.0, "SoarParams: bad grid");
  }
};

/// SOAR correlation (1 + d/L) exp(-d/L).
inline double soar_correlation(double d, double length_scale) {
  const double r = d / length_scale;
  return (1.0 + r) * std::exp(-r);
}

inline double grid_distance(int i, int j, int n_x, double dx, DistanceKind kind) {
  const int sep = std::abs(i - j);
  switch (kind) {
    case DistanceKind::absolute:
      return sep * dx;
    case DistanceKind::periodic:
      return std::min(sep, n_x - sep) * dx;
    case DistanceKind::chordal: {
      const double circumference = n_x * dx;
      return circumference / M_PI * std::sin(M_PI * std::min(sep, n_x - sep) / n_x);
    }
  }
  return 0.0;
}

/// Background covariance B with its symmetric square root and inverse, both
/// formed from one symmetric eigendecomposition, plus the diagonal
/// observation precision R^{-1}. The stored inverse is exactly symmetric, so
/// Hessian-vector products built on it stay symmetric to roundoff.
class CovarianceModel {
 public:
  /// Floor for eigenvalues, relative to the largest, before taking square roots.
  static constexpr double kEigenFloor = 1e-12;

  CovarianceModel(Matrix b, double obs_sigma) : b_(std::move(b)) {
    require(obs_sigma > 0.0, "CovarianceModel: observation sigma must be positive");
    r_inv_ = 1.0 / (obs_sigma * obs_sigma);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(b_);
    if (eig.info() != Eigen::Success) throw NumericalError("CovarianceModel: eigensolver failed");
    eigenvalues_ = eig.eigenvalues();
    const double lmax = eigenvalues_.maxCoeff();
    // Roundoff may push the smallest eigenvalue slightly below zero; anything
    // beyond that means the kernel is not a valid covariance on this grid.
    if (!(lmax > 0.0) || eigenvalues_.minCoeff() <= -1e-10 * lmax) {
      throw NumericalError("CovarianceModel: B is not positive definite (min eigenvalue " +
                           std::to_string(eigenvalues_.minCoeff()) +
                           "); length scale too large for this grid and distance");
    }
    const Eigen::VectorXd clamped = eigenvalues_.cwiseMax(kEigenFloor * lmax);
    const Matrix& v = eig.eigenvectors();
    b_sqrt_ = v * clamped.cwiseSqrt().asDiagonal() * v.transpose();
    b_sqrt_ = (0.5 * (b_sqrt_ + b_sqrt_.transpose())).eval();
    b_inv_ = v * clamped.cwiseInverse().asDiagonal() * v.transpose();
    b_inv_ = (0.5 * (b_inv_ + b_inv_.transpose())).eval();
  }

  int size() const { return static_cast<int>(b_.rows()); }
  const Matrix& b_matrix() const { return b_; }
  const Matrix& b_sqrt() const { return b_sqrt_; }
  const Matrix& b_inverse() const { return b_inv_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  double r_inv() const { return r_inv_; }

  StateVector apply_b(const StateVector& v) const {
    require_size(v.size(), size(), "apply_b");
    return b_ * v;
  }

  StateVector apply_b_inverse(const StateVector& v) const {
    require_size(v.size(), size(), "apply_b_inverse");
    return b_inv_ * v;
  }

  StateVector apply_b_sqrt(const StateVector& eta) const {
    require_size(eta.size(), size(), "apply_b_sqrt");
    return b_sqrt_ * eta;
  }

 private:
  Matrix b_;
  Matrix b_sqrt_;
  Eigen::VectorXd eigenvalues_;
  Matrix b_inv_;
  double r_inv_ = 1.0;
};

inline Matrix soar_matrix(const SoarParams& p) {
  p.validate();
  Matrix b(p.n_x, p.n_x);
  const double var = p.sigma_b * p.sigma_b;
  for (int i = 0; i < p.n_x; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = var * soar_correlation(grid_distance(i, j, p.n_x, p.dx, p.distance), p.length_scale);
      b(i, j) = v;
      b(j, i) = v;
    }
  }
  return b;
}

inline CovarianceModel build_soar(const SoarParams& p, double obs_sigma) {
  return CovarianceModel(soar_matrix(p), obs_sigma);
}

inline StateVector apply_b_inverse(const CovarianceModel& m, const StateVector& v) {
  return m.apply_b_inverse(v);
}

inline StateVector apply_b_sqrt(const CovarianceModel& m, const StateVector& eta) {
  return m.apply_b_sqrt(eta);
}

}  // namespace fnocg
