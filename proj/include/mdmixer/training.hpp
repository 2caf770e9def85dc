// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/data.hpp"
#include "mdmixer/evaluation.hpp"
#include "mdmixer/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mdmixer {

struct LossBreakdown {
  double main = 0.0;
  std::vector<double> align_per_head;
  double total = 0.0;
};

/// Mean absolute error over all elements.
template <class T>
double main_loss(const Panel<T>& prediction, const Panel<T>& target);

/// F x G matrix of adaptive average pooling along time: bin k averages source
/// indices [floor(k F / G), ceil((k + 1) F / G)).
template <class T>
Matrix<T> pooling_matrix(Index from, Index to);

/// The target pooled to every granularity in `schedule`.
template <class T>
std::vector<Panel<T>> alignment_targets(const Panel<T>& target, std::span<const Index> schedule);

/// main + alpha * mean_i align_i; the alignment terms are reported even when
/// the loss is disabled but only enter the total when it is enabled.
template <class T>
LossBreakdown total_loss(const ForecastOutput<T>& output, const Panel<T>& target, const ModelConfig& cfg);

template <class T>
struct GradientResult {
  ParamSet<T> grads;
  LossBreakdown loss;
};

/// Exact reverse-mode gradient of total_loss with respect to every parameter.
/// Instance statistics are constants; the L1 subgradient at zero residual is 0.
template <class T>
GradientResult<T> backward(const Panel<T>& x, const Panel<T>& target, const ParamSet<T>& params,
                           const ModelConfig& cfg);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled weight decay Adam with bias correction. Moments are allocated on
/// the first step, shaped like the parameters they track.
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  template <class Params>
  void step(Params& params, const Params& grads) {
    std::vector<Matrix<T>*> theta;
    std::vector<const Matrix<T>*> g;
    params.for_each([&](std::string_view, Matrix<T>& m) { theta.push_back(&m); });
    grads.for_each([&](std::string_view, const Matrix<T>& m) { g.push_back(&m); });
    if (theta.size() != g.size()) throw ShapeError("adamw: gradient set does not match parameters");
    if (first_moment_.empty()) {
      for (const auto* m : theta) {
        first_moment_.push_back(Matrix<T>::Zero(m->rows(), m->cols()));
        second_moment_.push_back(Matrix<T>::Zero(m->rows(), m->cols()));
      }
    }
    ++steps_;
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T correction1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(steps_)));
    const T correction2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(steps_)));
    const T lr = static_cast<T>(config_.lr);
    const T eps = static_cast<T>(config_.eps);
    const T decay = static_cast<T>(config_.weight_decay);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      require_same_shape(*theta[k], *g[k], "adamw");
      auto m = first_moment_[k].array();
      auto v = second_moment_[k].array();
      const auto grad = g[k]->array();
      m = b1 * m + (T(1) - b1) * grad;
      v = b2 * v + (T(1) - b2) * grad.square();
      auto p = theta[k]->array();
      p -= lr * ((m / correction1) / ((v / correction2).sqrt() + eps) + decay * p);
    }
  }

  long steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::vector<Matrix<T>> first_moment_;
  std::vector<Matrix<T>> second_moment_;
  long steps_ = 0;
};

/// MDMixer network bound to its configuration.
template <class T>
class MDMixer {
 public:
  using Scalar = T;
  using Params = ParamSet<T>;

  MDMixer(ModelConfig cfg, Params params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    check_param_shapes(params_, cfg_);
  }
  MDMixer(ModelConfig cfg, std::uint64_t seed) : MDMixer(cfg, init_params<T>(cfg, seed)) {}

  const ModelConfig& config() const { return cfg_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  Panel<T> predict(const Panel<T>& x) const { return forward(x, params_, cfg_).final; }
  ForecastOutput<T> run(const Panel<T>& x) const { return forward(x, params_, cfg_); }

  LossBreakdown loss_and_gradient(const Panel<T>& x, const Panel<T>& target, Params& grads) const {
    auto result = backward(x, target, params_, cfg_);
    grads = std::move(result.grads);
    return result.loss;
  }

 private:
  ModelConfig cfg_;
  Params params_;
};

struct TrainHyper {
  double lr = 1e-3;
  Index batch_size = 32;
  int max_epochs = 30;
  int patience = 5;  // 0 disables early stopping
  std::uint64_t seed = 1;
  double weight_decay = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::uint64_t seed = 0;
  std::string config_echo;
  double wall_seconds = 0.0;

  double best_val_mse() const;
  /// Per-epoch rows: epoch,train_loss,val_mse,val_mae.
  void write_csv(const std::filesystem::path& path) const;
  /// Summary block; wall-clock time is left out so reruns are byte-identical.
  std::string summary_text() const;
};

/// Seeded mini-batch training with per-epoch validation MSE and early stopping.
/// On return the model holds the best-validation parameters.
template <class Model>
TrainReport fit(Model& model, const WindowSet& train, const WindowSet& val, const TrainHyper& hyper) {
  using T = typename Model::Scalar;
  if (train.size() == 0 || val.size() == 0) throw DataError("training needs non-empty train and val splits");
  if (hyper.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const auto started = std::chrono::steady_clock::now();

  TrainReport report;
  report.seed = hyper.seed;
  AdamW<T> optimizer(AdamWConfig{hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay});
  std::mt19937_64 shuffle_rng(hyper.seed);
  typename Model::Params grads = model.params().zeros_like();
  typename Model::Params best = model.params();
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    Index batches = 0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t count = std::min(order.size() - first, static_cast<std::size_t>(hyper.batch_size));
      const auto wb = train.gather<T>(std::span<const Index>(order).subspan(first, count));
      LossBreakdown loss;
      try {
        loss = model.loss_and_gradient(wb.inputs, wb.targets, grads);
      } catch (const DivergenceError& e) {
        throw DivergenceError(fmt::format("epoch {}, batch {}: {}", epoch, batches + 1, e.what()));
      }
      if (!std::isfinite(loss.total)) {
        throw DivergenceError(fmt::format("non-finite loss at epoch {}, batch {}", epoch, batches + 1));
      }
      optimizer.step(model.params(), grads);
      loss_sum += loss.total;
      ++batches;
    }
    const Metrics val_metrics = window_metrics(model, val);
    if (!std::isfinite(val_metrics.mse)) {
      throw DivergenceError(fmt::format("non-finite validation MSE at epoch {}", epoch));
    }
    report.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), val_metrics.mse, val_metrics.mae});
    if (val_metrics.mse < best_val) {
      best_val = val_metrics.mse;
      best = model.params();
      report.best_epoch = epoch;
      stale = 0;
    } else if (hyper.patience > 0 && ++stale >= hyper.patience) {
      break;
    }
  }
  model.params() = std::move(best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

template <class T>
struct TrainResult {
  ParamSet<T> params;
  TrainReport report;
};

/// Seeded initialization followed by fit(); the seed drives both.
TrainResult<float> train(const ModelConfig& cfg, const PreparedDataset& data, const TrainHyper& hyper);

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  Index checked = 0;
  bool passed = false;
};

/// Central differences over every parameter entry of a seeded double-precision
/// model on one seeded random batch. Relative error uses max(|a|, |b|, 1e-8).
GradcheckReport gradcheck(const ModelConfig& cfg, std::uint64_t seed, double h, double tol, Index batch = 2);

}  // namespace mdmixer
