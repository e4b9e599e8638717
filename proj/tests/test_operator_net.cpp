#include "fnocg/adam.hpp"
#include "fnocg/model_io.hpp"
#include "fnocg/operator_net.hpp"
#include "fno_oracles.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace fnocg;
using namespace fno_oracle;


TEST(SpectralConv, MatchesNaiveDft) {
  std::mt19937_64 rng(1);
  for (auto [n, modes, cin, cout] : {std::array{16, 3, 2, 3}, std::array{25, 5, 4, 4}, std::array{100, 16, 3, 2}}) {
    const auto w = random_weights(modes, cout, cin, rng);
    const int batch = 3;
    Matrix x(cin, n * batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::normal_distribution<double>()(rng);
    const Matrix y = spectral_conv(x, n, w);
    for (int b = 0; b < batch; ++b) {
      const Matrix ref = naive_spectral_conv(x.middleCols(b * n, n), w);
      const double rel = (y.middleCols(b * n, n) - ref).norm() / ref.norm();
      EXPECT_LE(rel, 1e-10) << "n=" << n << " b=" << b;
    }
  }
}

TEST(SpectralConv, IdentityWeightsReproduceBandLimitedInput) {
  const int n = 32, modes = 6, ch = 3;
  std::vector<ComplexMatrix> w(modes, ComplexMatrix::Identity(ch, ch));
  Matrix x(ch, n);
  for (int c = 0; c < ch; ++c) {
    for (int j = 0; j < n; ++j) {
      const double t = 2 * M_PI * j / n;
      x(c, j) = 0.3 * c + std::cos(t + c) - 0.5 * std::sin(5 * t) + 0.2 * std::cos(3 * t);
    }
  }
  EXPECT_LE((spectral_conv(x, n, w) - x).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(SpectralConv, TruncatesHighModes) {
  const int n = 32, modes = 4;
  std::mt19937_64 rng(2);
  const auto w = random_weights(modes, 2, 2, rng);
  Matrix x(2, n);
  for (int j = 0; j < n; ++j) {
    x(0, j) = std::cos(2 * M_PI * (modes + 2) * j / n);
    x(1, j) = std::sin(2 * M_PI * (modes + 2) * j / n);
  }
  EXPECT_LE(spectral_conv(x, n, w).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SpectralConv, Linearity) {
  std::mt19937_64 rng(3);
  const int n = 40;
  const auto w = random_weights(8, 3, 3, rng);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x(3, 2 * n), y(3, 2 * n);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x.data()[i] = std::normal_distribution<double>()(rng);
      y.data()[i] = std::normal_distribution<double>()(rng);
    }
    const double a = 1.3, b = -0.7;
    const Matrix lhs = spectral_conv(a * x + b * y, n, w);
    const Matrix rhs = a * spectral_conv(x, n, w) + b * spectral_conv(y, n, w);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * (1 + rhs.cwiseAbs().maxCoeff()));
  }
}

TEST(SpectralConv, Errors) {
  std::mt19937_64 rng(4);
  const auto w = random_weights(5, 2, 2, rng);
  EXPECT_THROW(spectral_conv(Matrix::Zero(2, 8), 8, w), ConfigError);   // 8 < 2 * 5
  EXPECT_THROW(spectral_conv(Matrix::Zero(3, 20), 20, w), ConfigError);  // channel mismatch
  EXPECT_THROW(spectral_conv(Matrix::Zero(2, 25), 20, w), ConfigError);  // ragged batch
}

TEST(Fft, PlanCacheIsReusedAcrossBuffers) {
  const BatchedRealFft& a = cached_fft(12, 3);
  const BatchedRealFft& b = cached_fft(12, 3);
  EXPECT_EQ(&a, &b);
  EXPECT_EQ(a.spectrum_length(), 7);
  // Unaligned buffers are fine.
  std::vector<double> buf(12 * 3 + 1);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = std::sin(0.7 * i);
  std::vector<std::complex<double>> spec(7 * 3);
  a.forward(buf.data() + 1, spec.data());
  std::vector<double> channel0;
  for (int j = 0; j < 12; ++j) channel0.push_back(buf[1 + 3 * j]);
  const auto ref = oracle::dft(channel0);
  for (int k = 0; k < 7; ++k) EXPECT_LE(std::abs(spec[static_cast<std::size_t>(3 * k)] - ref[k]), 1e-12);
}

TEST(Gelu, MatchesErfForm) {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    EXPECT_NEAR(gelu(x), x * 0.5 * std::erfc(-x / std::sqrt(2.0)), 1e-15);
    const double h = 1e-6;
    EXPECT_NEAR(gelu_derivative(x), (gelu(x + h) - gelu(x - h)) / (2 * h), 1e-8);
  }
}

TEST(FnoConfig, ParameterCountMatchesTensors) {
  for (const FnoConfig& c : {FnoConfig{}, tiny_config(1), tiny_config(3)}) {
    EXPECT_EQ(FnoParams::zeros(c).count(), c.parameter_count());
  }
  // Default architecture: 2*64+64 + 4*(2*64*64*16 + 64*64 + 64) + 64*128 + 128 + 128 + 1.
  EXPECT_EQ(FnoConfig{}.parameter_count(), 192u + 4u * (131072u + 4096u + 64u) + 8192u + 257u);
}

TEST(FnoConfig, Validation) {
  FnoConfig c;
  EXPECT_NO_THROW(c.validate_for_grid(32));
  EXPECT_THROW(c.validate_for_grid(31), ConfigError);
  c.n_layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FnoConfig{};
  c.val_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FnoForward, ZeroParametersGiveProjectionBias) {
  FnoModel m;
  m.config = tiny_config(2);
  m.params = FnoParams::zeros(m.config);
  m.params.proj2_b[0] = 0.37;
  std::mt19937_64 rng(5);
  const Matrix f = oracle::random_vector(16, rng);
  const Matrix out = fno_forward(m, f);
  EXPECT_LE((out.array() - 0.37).abs().maxCoeff(), 0.0);
  m.norm = {0.0, 1.0, 0.5, 2.0};
  EXPECT_LE((fno_forward(m, f).array() - (0.5 + 2.0 * 0.37)).abs().maxCoeff(), 1e-15);
}

TEST(FnoForward, BatchMatchesSingleSamples) {
  FnoConfig c;
  c.width = 8;
  c.hidden = 16;
  c.n_modes = 6;
  const FnoModel m = random_model(c, 6);
  std::mt19937_64 rng(7);
  Matrix f(32, 5);
  for (int b = 0; b < 5; ++b) f.col(b) = oracle::random_vector(32, rng);
  const Matrix batch = fno_forward(m, f);
  for (int b = 0; b < 5; ++b) {
    EXPECT_LE((batch.col(b) - fno_predict(m, f.col(b))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FnoForward, AcceptsAnyResolutionAboveModeLimit) {
  const FnoModel m = random_model(FnoConfig{}, 8);
  for (int n : {32, 100, 200, 257}) {
    const StateVector f = StateVector::LinSpaced(n, -1.0, 1.0);
    EXPECT_EQ(fno_predict(m, f).size(), n);
  }
  EXPECT_THROW(fno_predict(m, StateVector::Zero(31)), ConfigError);
}

TEST(FnoForward, NonFiniteActivationsAreReported) {
  FnoModel m = random_model(tiny_config(2), 9);
  m.params.point_w[1](0, 0) = std::numeric_limits<double>::infinity();
  try {
    fno_predict(m, StateVector::LinSpaced(16, 0.0, 1.0));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
}

TEST(Loss, RelativeL2Examples) {
  std::mt19937_64 rng(10);
  Matrix t(20, 3);
  for (int b = 0; b < 3; ++b) t.col(b) = oracle::random_vector(20, rng);
  EXPECT_EQ(loss_rel_l2(t, t), 0.0);
  EXPECT_NEAR(loss_rel_l2(Matrix::Zero(20, 3), t), 1.0, 1e-15);
  EXPECT_NEAR(loss_rel_l2(1.1 * t, t), 0.1, 1e-14);
  EXPECT_THROW(loss_rel_l2(t, Matrix::Zero(20, 3)), ConfigError);
  EXPECT_THROW(loss_rel_l2(t, Matrix::Zero(20, 2)), ConfigError);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Matrix t(10, 2), p(10, 2);
  for (int b = 0; b < 2; ++b) {
    t.col(b) = oracle::random_vector(10, rng);
    p.col(b) = oracle::random_vector(10, rng);
  }
  Matrix g;
  loss_rel_l2(p, t, g);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Matrix a = p, b = p;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    EXPECT_NEAR(g.data()[i], (loss_rel_l2(a, t) - loss_rel_l2(b, t)) / 2e-6, 1e-8);
  }
}

namespace {

void check_backprop(const FnoModel& model, int n, int batch, std::uint64_t seed) {
  for (const auto& [name, err] : fno_oracle::backprop_fd_errors(model, n, batch, seed)) EXPECT_LE(err, 1e-4) << name;
}

}  // namespace

TEST(Backprop, SingleLayerMatchesFiniteDifferences) {
  check_backprop(random_model(tiny_config(1), 12, 30.0), 8, 2, 13);
}

TEST(Backprop, MultiLayerMatchesFiniteDifferences) {
  FnoConfig c = tiny_config(3);
  c.n_modes = 3;
  check_backprop(random_model(c, 14, 30.0), 12, 3, 15);
}

TEST(Backprop, DcImaginaryWeightsGetNoGradient) {
  const FnoModel m = random_model(tiny_config(2), 16, 30.0);
  std::mt19937_64 rng(17);
  const Matrix f = oracle::random_vector(8, rng);
  const Matrix target = oracle::random_vector(8, rng);
  FnoCache cache;
  Matrix dpred;
  loss_rel_l2(fno_forward(m, f, &cache), target, dpred);
  const FnoParams g = fno_backward(m, cache, dpred);
  for (const auto& layer : g.spectral) EXPECT_EQ(layer[0].imag().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  std::vector<double> p = {1.0, -2.0}, g = {0.0, 0.0}, m = {0.5, -0.5}, v = {0.1, 0.2};
  adam_update(p, g, m, v, 3, 1e-3);
  EXPECT_DOUBLE_EQ(m[0], 0.45);
  EXPECT_DOUBLE_EQ(v[1], 0.2 * 0.999);
  // Momentum still moves the parameters; with fresh state nothing moves.
  std::vector<double> p2 = {1.0, -2.0}, m2 = {0.0, 0.0}, v2 = {0.0, 0.0};
  adam_update(p2, g, m2, v2, 1, 1e-3);
  EXPECT_EQ(p2, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  std::vector<double> p = {0.0, 0.0, 0.0}, g = {3.0, -1e-3, 250.0}, m(3, 0.0), v(3, 0.0);
  adam_update(p, g, m, v, 1, 1e-2);
  EXPECT_NEAR(p[0], -1e-2, 1e-9);
  EXPECT_NEAR(p[1], 1e-2, 1e-6);
  EXPECT_NEAR(p[2], -1e-2, 1e-9);
}

TEST(Adam, ConvergesOnQuadratic) {
  // f(x, y) = (x - 1)^2 + 10 (y + 2)^2, minimum 0 at (1, -2).
  std::vector<double> p = {0.0, 0.0}, m(2, 0.0), v(2, 0.0);
  auto loss = [](const std::vector<double>& q) { return (q[0] - 1) * (q[0] - 1) + 10 * (q[1] + 2) * (q[1] + 2); };
  for (long step = 1; step <= 200; ++step) {
    std::vector<double> g = {2 * (p[0] - 1), 20 * (p[1] + 2)};
    adam_update(p, g, m, v, step, 0.1);
  }
  EXPECT_LE(loss(p), 1e-4);
}

TEST(Adam, NonFiniteGradientIsSkipped) {
  const FnoConfig c = tiny_config(1);
  std::mt19937_64 rng(18);
  FnoParams p = FnoParams::random(c, rng);
  const FnoParams before = p;
  FnoParams g = FnoParams::zeros(c);
  g.lift_w(0, 0) = std::nan("");
  AdamState s(c);
  EXPECT_FALSE(adam_step(p, g, s, 1e-3));
  EXPECT_EQ(s.step, 0);
  EXPECT_EQ(p.lift_w, before.lift_w);
  g.lift_w(0, 0) = 1.0;
  EXPECT_TRUE(adam_step(p, g, s, 1e-3));
  EXPECT_EQ(s.step, 1);
  EXPECT_NEAR(p.lift_w(0, 0), before.lift_w(0, 0) - 1e-3, 1e-9);
  EXPECT_EQ(p.lift_w(1, 0), before.lift_w(1, 0));
}

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fnocg_test_" + name);
}

}  // namespace

TEST(ModelIo, RoundTripIsBitExact) {
  FnoConfig c = FnoConfig{};
  c.width = 8;
  c.hidden = 12;
  c.n_modes = 5;
  c.lr = 3e-4;
  c.seed = 99;
  const FnoModel m = random_model(c, 19);
  const auto path = temp_path("roundtrip.fno");
  save_model(m, path.string());
  const FnoModel back = load_model(path.string());
  EXPECT_EQ(back.config.n_modes, 5);
  EXPECT_EQ(back.config.seed, 99u);
  EXPECT_EQ(back.config.lr, 3e-4);
  EXPECT_EQ(back.norm.f_std, m.norm.f_std);
  std::mt19937_64 rng(20);
  const StateVector f = oracle::random_vector(100, rng);
  const StateVector a = fno_predict(m, f), b = fno_predict(back, f);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * 100), 0);
  // Inference at a different resolution.
  EXPECT_EQ(fno_predict(back, oracle::random_vector(200, rng)).size(), 200);
  std::filesystem::remove(path);
}

TEST(ModelIo, CorruptFilesAreRejected) {
  const FnoModel m = random_model(tiny_config(1), 21);
  const auto path = temp_path("corrupt.fno");
  save_model(m, path.string());
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  EXPECT_THROW(load_model(path.string()), FormatError);

  bad = bytes;
  bad[8] = 7;  // version
  write(bad);
  EXPECT_THROW(load_model(path.string()), FormatError);

  write(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_model(path.string()), FormatError);

  write(bytes.substr(0, 10));
  EXPECT_THROW(load_model(path.string()), FormatError);

  write(bytes);
  EXPECT_NO_THROW(load_model(path.string()));
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path.string()), std::runtime_error);
}
