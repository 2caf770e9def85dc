// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/preprocess.hpp"
#include "mdmixer/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mdmixer {

enum class PosEncoding { shared, per_channel };

struct ModelConfig {
  Index lookback = 96;    // T
  Index horizon = 96;     // F
  Index channels = 7;     // C
  Index patch_len = 32;   // P
  Index stride = 16;      // S
  Index embed_dim = 64;   // D
  Index heads = 8;        // H
  Index hidden = 64;      // H_hid, shared by the trend MLPs and the gate
  Index kernel = 25;
  double align_weight = 0.01;  // alpha
  bool use_mpp = true;
  bool use_mim = true;
  bool use_amwg = true;
  bool use_align_loss = true;
  PosEncoding pos_encoding = PosEncoding::shared;

  /// Throws ConfigError naming the violated rule.
  void validate() const;

  /// Without the parallel predictor a single full-horizon head remains.
  Index active_heads() const { return use_mpp ? heads : 1; }
  bool mixing_enabled() const { return use_mpp && use_mim; }
  bool gating_enabled() const { return use_mpp && use_amwg; }
  Index patch_count() const { return PatchGeometry::for_lookback(lookback, patch_len, stride).count; }
};

/// G_i = (F / H) * i for i = 1..H, over the active heads.
std::vector<Index> granularity_schedule(const ModelConfig& cfg);

/// y = x * weight + bias with weight stored in x out.
template <class T>
struct Linear {
  Matrix<T> weight;
  Matrix<T> bias;  // 1 x out

  Index in() const { return weight.rows(); }
  Index out() const { return weight.cols(); }

  template <class Derived>
  Matrix<T> apply(const Eigen::MatrixBase<Derived>& x) const {
    Matrix<T> y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
  }
};

template <class T>
struct ParamSet {
  Linear<T> embed_s;
  Linear<T> embed_t;
  Matrix<T> pos_s;  // N x D, or (C * N) x D per channel
  Matrix<T> pos_t;
  std::vector<Linear<T>> season_heads;  // head i: (N * D) -> G_i
  std::vector<Linear<T>> trend_fc1;     // (N * D) -> H_hid
  std::vector<Linear<T>> trend_fc2;     // H_hid -> G_i
  std::vector<Linear<T>> mixers_s;      // entry i - 2 maps G_{i-1} -> G_i
  std::vector<Linear<T>> mixers_t;
  Linear<T> gate1;  // 2C -> H_hid
  Linear<T> gate2;  // H_hid -> H * C

  /// Visits every tensor in a stable order as f(name, tensor).
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  ParamSet zeros_like() const {
    ParamSet out = *this;
    out.for_each([](std::string_view, Matrix<T>& m) { m.setZero(); });
    return out;
  }

  template <class U>
  ParamSet<U> cast() const;

  Index scalar_count() const {
    Index n = 0;
    for_each([&](std::string_view, const Matrix<T>& m) { n += m.size(); });
    return n;
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    const auto linear = [&](const std::string& name, auto& layer) {
      f(name + ".weight", layer.weight);
      f(name + ".bias", layer.bias);
    };
    linear("embed_s", self.embed_s);
    linear("embed_t", self.embed_t);
    f(std::string("pos_s"), self.pos_s);
    f(std::string("pos_t"), self.pos_t);
    for (std::size_t i = 0; i < self.season_heads.size(); ++i) {
      linear("season_heads." + std::to_string(i + 1), self.season_heads[i]);
    }
    for (std::size_t i = 0; i < self.trend_fc1.size(); ++i) {
      linear("trend_heads." + std::to_string(i + 1) + ".fc1", self.trend_fc1[i]);
      linear("trend_heads." + std::to_string(i + 1) + ".fc2", self.trend_fc2[i]);
    }
    for (std::size_t i = 0; i < self.mixers_s.size(); ++i) {
      linear("mixers_s." + std::to_string(i + 2), self.mixers_s[i]);
    }
    for (std::size_t i = 0; i < self.mixers_t.size(); ++i) {
      linear("mixers_t." + std::to_string(i + 2), self.mixers_t[i]);
    }
    linear("gate1", self.gate1);
    linear("gate2", self.gate2);
  }
};

template <class T>
template <class U>
ParamSet<U> ParamSet<T>::cast() const {
  const auto lin = [](const Linear<T>& l) { return Linear<U>{l.weight.template cast<U>(), l.bias.template cast<U>()}; };
  const auto lins = [&](const std::vector<Linear<T>>& v) {
    std::vector<Linear<U>> out;
    for (const auto& l : v) out.push_back(lin(l));
    return out;
  };
  ParamSet<U> out;
  out.embed_s = lin(embed_s);
  out.embed_t = lin(embed_t);
  out.pos_s = pos_s.template cast<U>();
  out.pos_t = pos_t.template cast<U>();
  out.season_heads = lins(season_heads);
  out.trend_fc1 = lins(trend_fc1);
  out.trend_fc2 = lins(trend_fc2);
  out.mixers_s = lins(mixers_s);
  out.mixers_t = lins(mixers_t);
  out.gate1 = lin(gate1);
  out.gate2 = lin(gate2);
  return out;
}

/// Weights uniform in +-1/sqrt(fan_in), biases zero, positional encodings
/// N(0, 0.02^2). Deterministic per seed.
template <class T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <class T>
struct ForecastOutput {
  Panel<T> final;                        // B x C x F, original scale
  std::vector<Panel<T>> per_granularity;  // Y_i, B x C x G_i, original scale
  std::vector<Matrix<T>> upsampled;       // Y~_i, (B * C) x F, normalized scale
  GateWeights<T> gate_weights;            // empty when gating is disabled
  InstanceStats<T> stats;
};

/// Intermediates kept for the reverse pass.
template <class T>
struct ForwardTrace {
  PatchSet<T> patches_s;
  PatchSet<T> patches_t;
  Matrix<T> embedded_s;  // (R * N) x D
  Matrix<T> embedded_t;
  std::vector<Matrix<T>> trend_hidden;  // post-ReLU, R x H_hid
  std::vector<Matrix<T>> mixed_s;       // Y^s_i
  std::vector<Matrix<T>> mixed_t;       // Y^t_i
  std::vector<Matrix<T>> combined;      // Y_i, normalized scale
  Matrix<T> gate_input;                 // B x 2C
  Matrix<T> gate_hidden;                // post-ReLU, B x H_hid
};

/// Linear patch embedding plus positional encoding: (B*C*N) x D.
template <class T>
Matrix<T> embed(const PatchSet<T>& patches, const Linear<T>& layer, const Matrix<T>& pos, PosEncoding mode);

/// One linear head per granularity, shared across channels.
template <class T>
std::vector<Matrix<T>> mpp_seasonal(const Matrix<T>& flat, const std::vector<Linear<T>>& heads);

/// Two-layer heads: ReLU((N*D) -> H_hid) then H_hid -> G_i. Hidden activations
/// are appended to `hidden` when given.
template <class T>
std::vector<Matrix<T>> mpp_trend(const Matrix<T>& flat, const std::vector<Linear<T>>& fc1,
                                 const std::vector<Linear<T>>& fc2, std::vector<Matrix<T>>* hidden = nullptr);

/// Coarse-to-fine accumulation: Y_1 = Z_1, Y_i = Z_i + M_i(Y_{i-1}).
template <class T>
std::vector<Matrix<T>> mim(std::vector<Matrix<T>> z, const std::vector<Linear<T>>& mixers);

/// Channel-aware gate: pooled embeddings -> two-layer MLP -> softmax over heads.
template <class T>
GateWeights<T> amwg_weights(const Matrix<T>& embedded_s, const Matrix<T>& embedded_t, Index batch, Index channels,
                            Index heads, const Linear<T>& gate1, const Linear<T>& gate2,
                            Matrix<T>* gate_input = nullptr, Matrix<T>* gate_hidden = nullptr);

/// Endpoint-aligned linear interpolation from `from` samples to `to` samples, as
/// a from x to matrix applied on the right.
template <class T>
Matrix<T> interpolation_matrix(Index from, Index to);

template <class T>
Matrix<T> upsample(const Matrix<T>& y, Index horizon);

/// Y = sum_i W_i * Y~_i + mean_i Y~_i, weights broadcast over the horizon.
template <class T>
Matrix<T> fuse(const std::vector<Matrix<T>>& upsampled, const GateWeights<T>& weights);

template <class T>
Matrix<T> mean_fuse(const std::vector<Matrix<T>>& upsampled);

template <class T>
ForecastOutput<T> forward(const Panel<T>& x, const ParamSet<T>& params, const ModelConfig& cfg,
                          ForwardTrace<T>* trace = nullptr);

/// Throws ShapeError naming the first tensor whose shape disagrees with `cfg`.
template <class T>
void check_param_shapes(const ParamSet<T>& params, const ModelConfig& cfg);

}  // namespace mdmixer
