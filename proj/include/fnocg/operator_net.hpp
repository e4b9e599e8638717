#pragma once

#include "fnocg/common.hpp"
#include "fnocg/fft.hpp"

#include <complex>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fnocg {

using ComplexMatrix = Eigen::MatrixXcd;

/// Hyperparameters of the 1-D Fourier neural operator and its training run.
struct FnoConfig {
  static constexpr int kInChannels = 2;  // (standardized f, x / x_max)

  int n_modes = 16;
  int width = 64;
  int n_layers = 4;
  int hidden = 128;  // projection hidden width
  double lr = 1e-4;
  int batch_size = 32;
  int n_epochs = 500;
  int patience = 50;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_modes >= 1, "FnoConfig: n_modes must be >= 1");
    require(width >= 1 && hidden >= 1, "FnoConfig: width and hidden must be >= 1");
    require(n_layers >= 1, "FnoConfig: n_layers must be >= 1");
    require(lr > 0.0, "FnoConfig: lr must be positive");
    require(batch_size >= 1 && n_epochs >= 0 && patience >= 1, "FnoConfig: bad training schedule");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "FnoConfig: val_fraction must be in [0, 1)");
  }

  /// The spectral layers need 2 * n_modes <= n_x so the Nyquist mode is never kept.
  void validate_for_grid(int n_x) const {
    require(n_modes <= n_x / 2 + 1 && n_x >= 2 * n_modes,
            "FnoConfig: n_modes too large for n_x = " + std::to_string(n_x));
  }

  std::size_t parameter_count() const {
    const auto w = static_cast<std::size_t>(width);
    const auto h = static_cast<std::size_t>(hidden);
    const auto m = static_cast<std::size_t>(n_modes);
    const std::size_t lift = kInChannels * w + w;
    const std::size_t layer = 2 * w * w * m + w * w + w;
    const std::size_t proj = w * h + h + h + 1;
    return lift + static_cast<std::size_t>(n_layers) * layer + proj;
  }
};

/// Named view of one parameter tensor as contiguous doubles.
struct TensorView {
  std::string name;
  std::span<double> data;
  std::vector<std::uint64_t> shape;
};

/// All trainable tensors. Also used to hold gradients and optimizer moments.
/// Spectral weights are stored per layer and per mode as (out x in) complex
/// matrices.
struct FnoParams {
  Matrix lift_w;
  Eigen::VectorXd lift_b;
  std::vector<std::vector<ComplexMatrix>> spectral;
  std::vector<Matrix> point_w;
  std::vector<Eigen::VectorXd> point_b;
  Matrix proj1_w;
  Eigen::VectorXd proj1_b;
  Matrix proj2_w;
  Eigen::VectorXd proj2_b;

  static FnoParams zeros(const FnoConfig& c) {
    FnoParams p;
    p.lift_w = Matrix::Zero(c.width, FnoConfig::kInChannels);
    p.lift_b = Eigen::VectorXd::Zero(c.width);
    p.spectral.assign(static_cast<std::size_t>(c.n_layers),
                      std::vector<ComplexMatrix>(static_cast<std::size_t>(c.n_modes),
                                                 ComplexMatrix::Zero(c.width, c.width)));
    p.point_w.assign(static_cast<std::size_t>(c.n_layers), Matrix::Zero(c.width, c.width));
    p.point_b.assign(static_cast<std::size_t>(c.n_layers), Eigen::VectorXd::Zero(c.width));
    p.proj1_w = Matrix::Zero(c.hidden, c.width);
    p.proj1_b = Eigen::VectorXd::Zero(c.hidden);
    p.proj2_w = Matrix::Zero(1, c.hidden);
    p.proj2_b = Eigen::VectorXd::Zero(1);
    return p;
  }

  /// PyTorch-style initialization: linear maps uniform in +-1/sqrt(fan_in),
  /// spectral weights uniform in [0, 1/width^2) for both real and imaginary parts.
  static FnoParams random(const FnoConfig& c, std::mt19937_64& rng) {
    FnoParams p = zeros(c);
    auto fill_linear = [&](auto& w, Eigen::VectorXd& b) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = u(rng);
    };
    fill_linear(p.lift_w, p.lift_b);
    const double scale = 1.0 / (static_cast<double>(c.width) * c.width);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int l = 0; l < c.n_layers; ++l) {
      for (auto& w : p.spectral[static_cast<std::size_t>(l)]) {
        for (Eigen::Index i = 0; i < w.size(); ++i) {
          const double re = scale * u01(rng);
          const double im = scale * u01(rng);
          w.data()[i] = {re, im};
        }
      }
      fill_linear(p.point_w[static_cast<std::size_t>(l)], p.point_b[static_cast<std::size_t>(l)]);
    }
    fill_linear(p.proj1_w, p.proj1_b);
    fill_linear(p.proj2_w, p.proj2_b);
    return p;
  }

  /// Every tensor in a fixed order; used by the optimizer and serialization.
  std::vector<TensorView> tensors() {
    std::vector<TensorView> out;
    auto add = [&](std::string name, double* d, Eigen::Index n, std::vector<std::uint64_t> shape) {
      out.push_back({std::move(name), std::span<double>(d, static_cast<std::size_t>(n)), std::move(shape)});
    };
    auto dims = [](const auto& m) {
      return std::vector<std::uint64_t>{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    };
    add("lift.weight", lift_w.data(), lift_w.size(), dims(lift_w));
    add("lift.bias", lift_b.data(), lift_b.size(), {static_cast<std::uint64_t>(lift_b.size())});
    for (std::size_t l = 0; l < spectral.size(); ++l) {
      const std::string prefix = "layer." + std::to_string(l) + ".";
      for (std::size_t k = 0; k < spectral[l].size(); ++k) {
        auto& w = spectral[l][k];
        add(prefix + "spectral." + std::to_string(k), reinterpret_cast<double*>(w.data()), 2 * w.size(),
            {2, static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())});
      }
      add(prefix + "pointwise.weight", point_w[l].data(), point_w[l].size(), dims(point_w[l]));
      add(prefix + "pointwise.bias", point_b[l].data(), point_b[l].size(),
          {static_cast<std::uint64_t>(point_b[l].size())});
    }
    add("proj1.weight", proj1_w.data(), proj1_w.size(), dims(proj1_w));
    add("proj1.bias", proj1_b.data(), proj1_b.size(), {static_cast<std::uint64_t>(proj1_b.size())});
    add("proj2.weight", proj2_w.data(), proj2_w.size(), dims(proj2_w));
    add("proj2.bias", proj2_b.data(), proj2_b.size(), {static_cast<std::uint64_t>(proj2_b.size())});
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : const_cast<FnoParams*>(this)->tensors()) n += t.data.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& t : const_cast<FnoParams*>(this)->tensors()) {
      for (double v : t.data) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }
};

/// Affine standardization of the input f and the output u0, fitted on the
/// training split and applied inside the model.
struct FnoNormalization {
  double f_mean = 0.0;
  double f_std = 1.0;
  double y_mean = 0.0;
  double y_std = 1.0;
};

struct FnoModel {
  FnoConfig config;
  FnoParams params;
  FnoNormalization norm;
};

/// Standard normal CDF; GELU(x) = x * Phi(x) (the exact erf form).
inline double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu(double x) { return x * normal_cdf(x); }

inline double gelu_derivative(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return normal_cdf(x) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Elementwise normal_cdf. The forward pass keeps these values so that the
/// backward pass needs no further erf evaluations.
inline Matrix normal_cdf(const Matrix& z) { return z.unaryExpr([](double s) { return normal_cdf(s); }); }

/// Elementwise GELU derivative given z and Phi(z).
inline Matrix gelu_derivative(const Matrix& z, const Matrix& cdf) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  return (cdf.array() + z.array() * inv_sqrt_2pi * (-0.5 * z.array().square()).exp()).matrix();
}

namespace detail {

/// Spectral convolution on channel-major data (channels x batch*n).
/// With `adjoint`, applies W^H per mode instead of W. When `coeffs` is given
/// it receives the retained input modes, column k * batch + b.
inline Matrix spectral_apply(const Matrix& x, int n, const std::vector<ComplexMatrix>& w, bool adjoint,
                             ComplexMatrix* coeffs) {
  const int modes = static_cast<int>(w.size());
  require(modes >= 1, "spectral_conv: no modes");
  require(n >= 2 * modes, "spectral_conv: n_modes too large for n_x = " + std::to_string(n));
  require(x.cols() % n == 0, "spectral_conv: column count is not a multiple of n_x");
  const int batch = static_cast<int>(x.cols() / n);
  const int cin = static_cast<int>(adjoint ? w[0].rows() : w[0].cols());
  const int cout = static_cast<int>(adjoint ? w[0].cols() : w[0].rows());
  require(x.rows() == cin, "spectral_conv: channel mismatch");

  const BatchedRealFft& fin = cached_fft(n, cin);
  const BatchedRealFft& fout = cached_fft(n, cout);
  const int half = n / 2 + 1;

  ComplexMatrix xhat(cin, static_cast<Eigen::Index>(modes) * batch);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(half) * std::max(cin, cout));
  for (int b = 0; b < batch; ++b) {
    fin.forward(x.data() + static_cast<Eigen::Index>(b) * n * cin, spec.data());
    for (int k = 0; k < modes; ++k) {
      xhat.col(static_cast<Eigen::Index>(k) * batch + b) =
          Eigen::Map<const Eigen::VectorXcd>(spec.data() + static_cast<std::size_t>(k) * cin, cin);
    }
  }

  ComplexMatrix yhat(cout, xhat.cols());
  for (int k = 0; k < modes; ++k) {
    const auto cols = Eigen::seqN(static_cast<Eigen::Index>(k) * batch, batch);
    if (adjoint) {
      yhat(Eigen::all, cols).noalias() = w[static_cast<std::size_t>(k)].adjoint() * xhat(Eigen::all, cols);
    } else {
      yhat(Eigen::all, cols).noalias() = w[static_cast<std::size_t>(k)] * xhat(Eigen::all, cols);
    }
  }

  Matrix out(cout, x.cols());
  for (int b = 0; b < batch; ++b) {
    std::fill(spec.begin(), spec.end(), std::complex<double>(0.0, 0.0));
    for (int k = 0; k < modes; ++k) {
      Eigen::Map<Eigen::VectorXcd>(spec.data() + static_cast<std::size_t>(k) * cout, cout) =
          yhat.col(static_cast<Eigen::Index>(k) * batch + b);
    }
    // A real signal's mean has no imaginary part.
    for (int c = 0; c < cout; ++c) spec[static_cast<std::size_t>(c)].imag(0.0);
    fout.inverse(spec.data(), out.data() + static_cast<Eigen::Index>(b) * n * cout);
  }
  out *= 1.0 / n;
  if (coeffs != nullptr) *coeffs = std::move(xhat);
  return out;
}

}  // namespace detail

/// Real FFT along space, per-mode complex channel mixing of the lowest
/// `w.size()` modes, higher modes dropped, inverse real FFT.
/// `x` is channels x (batch * n), sample b occupying columns [b*n, (b+1)*n).
inline Matrix spectral_conv(const Matrix& x, int n, const std::vector<ComplexMatrix>& w) {
  return detail::spectral_apply(x, n, w, false, nullptr);
}

/// Activations kept from the forward pass for backpropagation.
struct FnoCache {
  int n = 0;
  int batch = 0;
  Matrix input;                      // 2 x batch*n
  std::vector<Matrix> layer_in;      // n_layers + 1 entries; last is the projection input
  std::vector<ComplexMatrix> coeffs;  // retained Fourier modes of each layer input
  std::vector<Matrix> pre_act;       // pre-activation of each layer
  std::vector<Matrix> pre_cdf;       // normal_cdf(pre_act), all but the last layer
  Matrix hidden_pre;
  Matrix hidden_cdf;
};

/// Builds the 2-channel input (standardized f, normalized coordinate) from
/// columns of `f` (n x batch).
inline Matrix fno_input(const FnoModel& m, const Matrix& f) {
  const auto n = f.rows();
  const auto batch = f.cols();
  Matrix in(FnoConfig::kInChannels, n * batch);
  const double inv_std = 1.0 / m.norm.f_std;
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index col = b * n + i;
      in(0, col) = (f(i, b) - m.norm.f_mean) * inv_std;
      in(1, col) = -0.5 + (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    }
  }
  return in;
}

/// Batched forward pass: f is n x batch, returns u0 predictions (n x batch)
/// in physical units. Pass a cache to enable fno_backward.
inline Matrix fno_forward(const FnoModel& m, const Matrix& f, FnoCache* cache = nullptr) {
  const FnoConfig& c = m.config;
  const FnoParams& p = m.params;
  const int n = static_cast<int>(f.rows());
  const int batch = static_cast<int>(f.cols());
  c.validate_for_grid(n);
  require(batch >= 1, "fno_forward: empty batch");

  auto check = [](const Matrix& a, int layer) {
    if (!a.allFinite()) throw NumericalError("fno_forward: non-finite activation at layer " + std::to_string(layer));
  };

  Matrix input = fno_input(m, f);
  Matrix v = p.lift_w * input;
  v.colwise() += p.lift_b;
  check(v, 0);
  if (cache != nullptr) {
    cache->n = n;
    cache->batch = batch;
    cache->layer_in.clear();
    cache->coeffs.clear();
    cache->pre_act.clear();
    cache->pre_cdf.clear();
  }
  for (int l = 0; l < c.n_layers; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    ComplexMatrix coeffs;
    Matrix z = detail::spectral_apply(v, n, p.spectral[ul], false, cache != nullptr ? &coeffs : nullptr);
    z.noalias() += p.point_w[ul] * v;
    z.colwise() += p.point_b[ul];
    const bool activate = l + 1 < c.n_layers;
    Matrix cdf = activate ? normal_cdf(z) : Matrix();
    Matrix next = activate ? Matrix(z.cwiseProduct(cdf)) : z;
    check(next, l + 1);
    if (cache != nullptr) {
      cache->pre_cdf.push_back(std::move(cdf));
      cache->layer_in.push_back(std::move(v));
      cache->coeffs.push_back(std::move(coeffs));
      cache->pre_act.push_back(std::move(z));
    }
    v = std::move(next);
  }
  Matrix h = p.proj1_w * v;
  h.colwise() += p.proj1_b;
  Matrix h_cdf = normal_cdf(h);
  const Matrix a = h.cwiseProduct(h_cdf);
  Matrix out = p.proj2_w * a;
  out.array() += p.proj2_b[0];
  check(out, c.n_layers + 1);
  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->layer_in.push_back(std::move(v));
    cache->hidden_pre = std::move(h);
    cache->hidden_cdf = std::move(h_cdf);
  }
  Matrix pred = (m.norm.y_mean + m.norm.y_std * out.array()).matrix();
  return pred.reshaped(n, batch);
}

inline StateVector fno_predict(const FnoModel& m, const StateVector& f) {
  return fno_forward(m, Matrix(f)).col(0);
}

/// Gradient of a scalar loss with respect to all parameters, given dL/dpred
/// (n x batch) and the cache of the matching forward pass.
inline FnoParams fno_backward(const FnoModel& m, const FnoCache& cache, const Matrix& dpred) {
  const FnoConfig& c = m.config;
  const FnoParams& p = m.params;
  require(dpred.rows() == cache.n && dpred.cols() == cache.batch, "fno_backward: gradient shape mismatch");
  require(static_cast<int>(cache.pre_act.size()) == c.n_layers, "fno_backward: cache is empty");
  const int n = cache.n;
  const int batch = cache.batch;
  FnoParams g = FnoParams::zeros(c);

  const Matrix dout = m.norm.y_std * dpred.reshaped(1, static_cast<Eigen::Index>(n) * batch);
  const Matrix a = cache.hidden_pre.cwiseProduct(cache.hidden_cdf);
  g.proj2_w.noalias() = dout * a.transpose();
  g.proj2_b[0] = dout.sum();
  Matrix dh = (p.proj2_w.transpose() * dout).cwiseProduct(gelu_derivative(cache.hidden_pre, cache.hidden_cdf));
  const Matrix& v_last = cache.layer_in.back();
  g.proj1_w.noalias() = dh * v_last.transpose();
  g.proj1_b = dh.rowwise().sum();
  Matrix dv = p.proj1_w.transpose() * dh;

  for (int l = c.n_layers - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    Matrix dz = l + 1 < c.n_layers
                    ? Matrix(dv.cwiseProduct(gelu_derivative(cache.pre_act[ul], cache.pre_cdf[ul])))
                    : dv;
    const Matrix& vin = cache.layer_in[ul];
    g.point_w[ul].noalias() = dz * vin.transpose();
    g.point_b[ul] = dz.rowwise().sum();
    // The adjoint of (scale, mix, truncate, irfft) is the same pipeline with
    // W^H; the per-mode weight gradient is (c_k / n) G_k X_k^H.
    ComplexMatrix gcoeffs;
    Matrix dprev = detail::spectral_apply(dz, n, p.spectral[ul], true, &gcoeffs);
    const ComplexMatrix& xcoeffs = cache.coeffs[ul];
    for (int k = 0; k < c.n_modes; ++k) {
      const auto cols = Eigen::seqN(static_cast<Eigen::Index>(k) * batch, batch);
      const double weight = (k == 0 ? 1.0 : 2.0) / n;
      g.spectral[ul][static_cast<std::size_t>(k)].noalias() =
          weight * gcoeffs(Eigen::all, cols) * xcoeffs(Eigen::all, cols).adjoint();
    }
    dprev.noalias() += p.point_w[ul].transpose() * dz;
    dv = std::move(dprev);
  }
  g.lift_w.noalias() = dv * cache.input.transpose();
  g.lift_b = dv.rowwise().sum();
  return g;
}

/// Mean over columns of |pred_i - target_i| / |target_i|.
inline double loss_rel_l2(const Matrix& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "loss_rel_l2: shape mismatch");
  require(pred.cols() >= 1, "loss_rel_l2: empty batch");
  double total = 0.0;
  for (Eigen::Index b = 0; b < pred.cols(); ++b) {
    const double tn = target.col(b).norm();
    if (!(tn > 0.0)) throw ConfigError("loss_rel_l2: zero-norm target");
    total += (pred.col(b) - target.col(b)).norm() / tn;
  }
  return total / static_cast<double>(pred.cols());
}

/// loss_rel_l2 and its gradient with respect to pred.
inline double loss_rel_l2(const Matrix& pred, const Matrix& target, Matrix& dpred) {
  const double loss = loss_rel_l2(pred, target);
  const double inv_batch = 1.0 / static_cast<double>(pred.cols());
  dpred.resize(pred.rows(), pred.cols());
  for (Eigen::Index b = 0; b < pred.cols(); ++b) {
    const Eigen::VectorXd diff = pred.col(b) - target.col(b);
    const double dn = diff.norm();
    const double tn = target.col(b).norm();
    dpred.col(b) = dn > 0.0 ? Eigen::VectorXd(diff * (inv_batch / (dn * tn))) : Eigen::VectorXd::Zero(pred.rows());
  }
  return loss;
}

}  // namespace fnocg
