// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/model.hpp"
#include "mdmixer/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mdmixer {

enum class BaselineKind { linear_direct, decomp_linear, dual_branch };

std::string_view to_string(BaselineKind kind);
std::optional<BaselineKind> parse_baseline_kind(std::string_view text);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::dual_branch;
  Index lookback = 96;
  Index horizon = 96;
  Index channels = 7;
  Index hidden = 64;  // dual_branch trend MLP width
  Index kernel = 25;

  void validate() const;
};

/// Channel-shared maps over the lookback axis. Only the layers of the
/// configured kind are allocated and visited.
template <class T>
struct BaselineParams {
  BaselineKind kind = BaselineKind::linear_direct;
  Linear<T> direct;        // linear_direct: T -> F
  Linear<T> seasonal;      // decomposing kinds: T -> F
  Linear<T> trend;         // decomp_linear: T -> F
  Linear<T> trend_hidden;  // dual_branch: T -> H_hid
  Linear<T> trend_out;     // dual_branch: H_hid -> F

  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  BaselineParams zeros_like() const {
    BaselineParams out = *this;
    out.for_each([](std::string_view, Matrix<T>& m) { m.setZero(); });
    return out;
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    const auto linear = [&](const char* name, auto& layer) {
      f(std::string(name) + ".weight", layer.weight);
      f(std::string(name) + ".bias", layer.bias);
    };
    switch (self.kind) {
      case BaselineKind::linear_direct:
        linear("direct", self.direct);
        break;
      case BaselineKind::decomp_linear:
        linear("seasonal", self.seasonal);
        linear("trend", self.trend);
        break;
      case BaselineKind::dual_branch:
        linear("seasonal", self.seasonal);
        linear("trend_hidden", self.trend_hidden);
        linear("trend_out", self.trend_out);
        break;
    }
  }
};

template <class T>
BaselineParams<T> init_baseline_params(const BaselineConfig& cfg, std::uint64_t seed);

/// Instance normalization wraps every kind. decomp_linear sums linear seasonal
/// and trend forecasts; dual_branch swaps the trend map for ReLU MLP.
template <class T>
Panel<T> baseline_forward(const Panel<T>& x, const BaselineParams<T>& params, const BaselineConfig& cfg);

/// Gradient of the mean absolute error of the forecast.
template <class T>
LossBreakdown baseline_backward(const Panel<T>& x, const Panel<T>& target, const BaselineParams<T>& params,
                                const BaselineConfig& cfg, BaselineParams<T>& grads);

template <class T>
class Baseline {
 public:
  using Scalar = T;
  using Params = BaselineParams<T>;

  Baseline(BaselineConfig cfg, std::uint64_t seed) : cfg_(cfg), params_(init_baseline_params<T>(cfg, seed)) {}
  Baseline(BaselineConfig cfg, Params params) : cfg_(cfg), params_(std::move(params)) { cfg_.validate(); }

  const BaselineConfig& config() const { return cfg_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  Panel<T> predict(const Panel<T>& x) const { return baseline_forward(x, params_, cfg_); }
  LossBreakdown loss_and_gradient(const Panel<T>& x, const Panel<T>& target, Params& grads) const {
    return baseline_backward(x, target, params_, cfg_, grads);
  }

 private:
  BaselineConfig cfg_;
  Params params_;
};

}  // namespace mdmixer
