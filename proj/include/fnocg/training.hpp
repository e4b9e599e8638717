#pragma once

#include "fnocg/adam.hpp"
#include "fnocg/operator_net.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace fnocg {

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_time = 0.0;  // seconds since training started
  int skipped_steps = 0;   // updates rejected for non-finite gradients
};

struct TrainResult {
  FnoModel model;  // parameters from the epoch with the best validation loss
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
};

class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::vector<EpochLog> log)
      : NumericalError(what), log_(std::move(log)) {}
  const std::vector<EpochLog>& log() const { return log_; }

 private:
  std::vector<EpochLog> log_;
};

/// Stacks the selected vectors as columns.
inline Matrix gather_columns(const std::vector<StateVector>& xs, std::span<const std::size_t> idx) {
  Matrix out(xs.at(idx.front()).size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = xs[idx[j]];
  return out;
}

/// Scalar mean and standard deviation over every entry of the selected vectors.
inline std::pair<double, double> pooled_moments(const std::vector<StateVector>& xs, std::span<const std::size_t> idx) {
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t i : idx) {
    sum += xs[i].sum();
    count += static_cast<double>(xs[i].size());
  }
  const double mean = sum / count;
  double ss = 0.0;
  for (std::size_t i : idx) ss += (xs[i].array() - mean).square().sum();
  const double sd = std::sqrt(ss / count);
  return {mean, sd > 0.0 ? sd : 1.0};
}

/// Mean relative L2 loss of the model over the selected samples.
inline double evaluate_loss(const FnoModel& model, const std::vector<StateVector>& inputs,
                            const std::vector<StateVector>& targets, std::span<const std::size_t> idx,
                            std::size_t chunk = 256) {
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const auto part = idx.subspan(start, std::min(chunk, idx.size() - start));
    const Matrix pred = fno_forward(model, gather_columns(inputs, part));
    total += loss_rel_l2(pred, gather_columns(targets, part)) * static_cast<double>(part.size());
  }
  return total / static_cast<double>(idx.size());
}

/// Progress callback, invoked after each epoch.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch Adam on the relative L2 loss mapping inputs (f) to targets (u0).
/// The data is split into training and validation parts with the config seed;
/// with val_fraction == 0 the training set doubles as the validation set.
/// Returns the parameters with the lowest validation loss.
inline TrainResult train(const FnoConfig& cfg, const std::vector<StateVector>& inputs,
                         const std::vector<StateVector>& targets, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!inputs.empty(), "train: empty dataset");
  require(inputs.size() == targets.size(), "train: inputs and targets differ in length");
  const auto n_x = inputs.front().size();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    require(inputs[i].size() == n_x && targets[i].size() == n_x, "train: inconsistent sample lengths");
  }
  cfg.validate_for_grid(static_cast<int>(n_x));

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(inputs.size())));
  require(n_val < inputs.size(), "train: validation split leaves no training data");
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  if (val_idx.empty()) val_idx = train_idx;

  TrainResult result;
  FnoModel& best = result.model;
  FnoModel model;
  model.config = cfg;
  std::tie(model.norm.f_mean, model.norm.f_std) = pooled_moments(inputs, train_idx);
  std::tie(model.norm.y_mean, model.norm.y_std) = pooled_moments(targets, train_idx);
  model.params = FnoParams::random(cfg, rng);
  AdamState adam(cfg);

  const auto t0 = std::chrono::steady_clock::now();
  const double initial_val = evaluate_loss(model, inputs, targets, val_idx);
  best = model;
  result.best_val_loss = initial_val;
  int since_best = 0;
  int bad_epochs = 0;
  Matrix dpred;
  FnoCache cache;

  for (int epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    EpochLog entry;
    entry.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::span<const std::size_t> batch(
          train_idx.data() + start, std::min(static_cast<std::size_t>(cfg.batch_size), train_idx.size() - start));
      const Matrix pred = fno_forward(model, gather_columns(inputs, batch), &cache);
      const double loss = loss_rel_l2(pred, gather_columns(targets, batch), dpred);
      loss_sum += loss * static_cast<double>(batch.size());
      const FnoParams grads = fno_backward(model, cache, dpred);
      if (!adam_step(model.params, grads, adam, cfg.lr)) ++entry.skipped_steps;
    }
    entry.train_loss = loss_sum / static_cast<double>(train_idx.size());
    double val = std::numeric_limits<double>::quiet_NaN();
    try {
      val = evaluate_loss(model, inputs, targets, val_idx);
    } catch (const NumericalError&) {
    }
    entry.val_loss = val;
    entry.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (!std::isfinite(val) || val > 10.0 * initial_val) {
      if (++bad_epochs >= 5) {
        throw TrainingDiverged("train: validation loss diverged at epoch " + std::to_string(epoch), result.log);
      }
    } else {
      bad_epochs = 0;
    }
    if (std::isfinite(val) && val < result.best_val_loss) {
      result.best_val_loss = val;
      result.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

inline void write_training_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "epoch,train_loss,val_loss,wall_time\n";
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.wall_time << '\n';
}

}  // namespace fnocg
