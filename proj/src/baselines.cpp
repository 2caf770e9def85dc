// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/baselines.hpp"

#include <fmt/format.h>

#include <random>

namespace mdmixer {

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::linear_direct: return "linear_direct";
    case BaselineKind::decomp_linear: return "decomp_linear";
    case BaselineKind::dual_branch: return "dual_branch";
  }
  return "unknown";
}

std::optional<BaselineKind> parse_baseline_kind(std::string_view text) {
  if (text == "linear_direct") return BaselineKind::linear_direct;
  if (text == "decomp_linear") return BaselineKind::decomp_linear;
  if (text == "dual_branch") return BaselineKind::dual_branch;
  return std::nullopt;
}

void BaselineConfig::validate() const {
  if (lookback < 1 || horizon < 1 || channels < 1 || hidden < 1) throw ConfigError("baseline dims must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError(fmt::format("kernel must be odd and >= 1 (got {})", kernel));
}

namespace {

template <class T>
Linear<T> uniform_linear(Index in, Index out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Linear<T> layer{Matrix<T>(in, out), Matrix<T>::Zero(1, out)};
  for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = static_cast<T>(dist(rng));
  return layer;
}

template <class T>
struct BaselineTrace {
  NormalizedPanel<T> normalized;
  Matrix<T> seasonal;  // or the whole normalized window for linear_direct
  Matrix<T> trend;
  Matrix<T> hidden;    // dual_branch, post-ReLU
};

template <class T>
Panel<T> run(const Panel<T>& x, const BaselineParams<T>& p, const BaselineConfig& cfg, BaselineTrace<T>& tr) {
  if (x.channels != cfg.channels || x.length() != cfg.lookback) {
    throw ShapeError("baseline_forward/input: window shape does not match the configuration");
  }
  tr.normalized = instance_normalize(x);
  Matrix<T> y;
  if (cfg.kind == BaselineKind::linear_direct) {
    tr.seasonal = tr.normalized.values.values;
    y = p.direct.apply(tr.seasonal);
  } else {
    auto parts = decompose(tr.normalized.values, cfg.kernel);
    tr.seasonal = std::move(parts.seasonal.values);
    tr.trend = std::move(parts.trend.values);
    y = p.seasonal.apply(tr.seasonal);
    if (cfg.kind == BaselineKind::decomp_linear) {
      y += p.trend.apply(tr.trend);
    } else {
      tr.hidden = p.trend_hidden.apply(tr.trend).cwiseMax(T(0));
      y += p.trend_out.apply(tr.hidden);
    }
  }
  return instance_denormalize(Panel<T>(x.batch, x.channels, std::move(y)), tr.normalized.stats);
}

}  // namespace

template <class T>
BaselineParams<T> init_baseline_params(const BaselineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  BaselineParams<T> p;
  p.kind = cfg.kind;
  switch (cfg.kind) {
    case BaselineKind::linear_direct:
      p.direct = uniform_linear<T>(cfg.lookback, cfg.horizon, rng);
      break;
    case BaselineKind::decomp_linear:
      p.seasonal = uniform_linear<T>(cfg.lookback, cfg.horizon, rng);
      p.trend = uniform_linear<T>(cfg.lookback, cfg.horizon, rng);
      break;
    case BaselineKind::dual_branch:
      p.seasonal = uniform_linear<T>(cfg.lookback, cfg.horizon, rng);
      p.trend_hidden = uniform_linear<T>(cfg.lookback, cfg.hidden, rng);
      p.trend_out = uniform_linear<T>(cfg.hidden, cfg.horizon, rng);
      break;
  }
  return p;
}

template <class T>
Panel<T> baseline_forward(const Panel<T>& x, const BaselineParams<T>& params, const BaselineConfig& cfg) {
  BaselineTrace<T> tr;
  return run(x, params, cfg, tr);
}

template <class T>
LossBreakdown baseline_backward(const Panel<T>& x, const Panel<T>& target, const BaselineParams<T>& params,
                                const BaselineConfig& cfg, BaselineParams<T>& grads) {
  BaselineTrace<T> tr;
  const Panel<T> y = run(x, params, cfg, tr);
  require_same_shape(y.values, target.values, "baseline_backward/target");
  LossBreakdown loss;
  loss.main = main_loss(y, target);
  loss.total = loss.main;

  grads = params.zeros_like();
  Matrix<T> d = (y.values - target.values).unaryExpr([](T v) { return static_cast<T>((v > T(0)) - (v < T(0))); }) /
                static_cast<T>(y.values.size());
  for (Index r = 0; r < d.rows(); ++r) d.row(r) *= tr.normalized.stats.std(r);

  const auto linear_grad = [&](Linear<T>& g, const Matrix<T>& input, const Matrix<T>& d_out) {
    g.weight.noalias() = input.transpose() * d_out;
    g.bias = d_out.colwise().sum();
  };
  switch (cfg.kind) {
    case BaselineKind::linear_direct:
      linear_grad(grads.direct, tr.seasonal, d);
      break;
    case BaselineKind::decomp_linear:
      linear_grad(grads.seasonal, tr.seasonal, d);
      linear_grad(grads.trend, tr.trend, d);
      break;
    case BaselineKind::dual_branch: {
      linear_grad(grads.seasonal, tr.seasonal, d);
      linear_grad(grads.trend_out, tr.hidden, d);
      const Matrix<T> d_hidden = (d * params.trend_out.weight.transpose())
                                     .cwiseProduct(tr.hidden.unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
      linear_grad(grads.trend_hidden, tr.trend, d_hidden);
      break;
    }
  }
  return loss;
}

template BaselineParams<float> init_baseline_params<float>(const BaselineConfig&, std::uint64_t);
template BaselineParams<double> init_baseline_params<double>(const BaselineConfig&, std::uint64_t);
template Panel<float> baseline_forward(const Panel<float>&, const BaselineParams<float>&, const BaselineConfig&);
template Panel<double> baseline_forward(const Panel<double>&, const BaselineParams<double>&, const BaselineConfig&);
template LossBreakdown baseline_backward(const Panel<float>&, const Panel<float>&, const BaselineParams<float>&,
                                         const BaselineConfig&, BaselineParams<float>&);
template LossBreakdown baseline_backward(const Panel<double>&, const Panel<double>&, const BaselineParams<double>&,
                                         const BaselineConfig&, BaselineParams<double>&);

}  // namespace mdmixer
