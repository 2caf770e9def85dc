// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/model.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace mdmixer {

void ModelConfig::validate() const {
  const auto positive = [](Index v, const char* name) {
    if (v < 1) throw ConfigError(fmt::format("{} must be >= 1 (got {})", name, v));
  };
  positive(lookback, "lookback");
  positive(horizon, "horizon");
  positive(channels, "channels");
  positive(patch_len, "patch_len");
  positive(stride, "stride");
  positive(embed_dim, "embed_dim");
  positive(heads, "heads");
  positive(hidden, "hidden");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError(fmt::format("kernel must be odd and >= 1 (got {})", kernel));
  if (patch_len > lookback) {
    throw ConfigError(fmt::format("patch_len ({}) must not exceed lookback ({})", patch_len, lookback));
  }
  if (horizon % heads != 0) {
    throw ConfigError(fmt::format("heads must divide horizon: H = {} does not divide F = {}", heads, horizon));
  }
  if (!(align_weight >= 0.0) || !std::isfinite(align_weight)) {
    throw ConfigError("align_weight must be a finite value >= 0");
  }
}

std::vector<Index> granularity_schedule(const ModelConfig& cfg) {
  const Index heads = cfg.active_heads();
  if (cfg.horizon % heads != 0) {
    throw ConfigError(fmt::format("heads must divide horizon: H = {} does not divide F = {}", heads, cfg.horizon));
  }
  const Index unit = cfg.horizon / heads;
  std::vector<Index> out;
  for (Index i = 1; i <= heads; ++i) out.push_back(unit * i);
  return out;
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
Matrix<T> normal_matrix(Index rows, Index cols, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  Matrix<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <class T>
Matrix<T> flatten_series(const Matrix<T>& embedded, Index rows) {
  return Eigen::Map<const Matrix<T>>(embedded.data(), rows, embedded.size() / rows);
}

}  // namespace

template <class T>
ParamSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const Index n = cfg.patch_count();
  const Index d = cfg.embed_dim;
  const Index flat = n * d;
  const auto schedule = granularity_schedule(cfg);
  const Index heads = cfg.active_heads();
  const Index pos_rows = cfg.pos_encoding == PosEncoding::shared ? n : cfg.channels * n;

  ParamSet<T> p;
  p.embed_s = uniform_linear<T>(cfg.patch_len, d, rng);
  p.embed_t = uniform_linear<T>(cfg.patch_len, d, rng);
  p.pos_s = normal_matrix<T>(pos_rows, d, 0.02, rng);
  p.pos_t = normal_matrix<T>(pos_rows, d, 0.02, rng);
  for (Index g : schedule) p.season_heads.push_back(uniform_linear<T>(flat, g, rng));
  for (Index g : schedule) {
    p.trend_fc1.push_back(uniform_linear<T>(flat, cfg.hidden, rng));
    p.trend_fc2.push_back(uniform_linear<T>(cfg.hidden, g, rng));
  }
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    p.mixers_s.push_back(uniform_linear<T>(schedule[i - 1], schedule[i], rng));
  }
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    p.mixers_t.push_back(uniform_linear<T>(schedule[i - 1], schedule[i], rng));
  }
  p.gate1 = uniform_linear<T>(2 * cfg.channels, cfg.hidden, rng);
  p.gate2 = uniform_linear<T>(cfg.hidden, heads * cfg.channels, rng);
  return p;
}

template <class T>
void check_param_shapes(const ParamSet<T>& params, const ModelConfig& cfg) {
  const auto expected = init_params<float>(cfg, 0);
  std::vector<std::pair<std::string, std::pair<Index, Index>>> shapes;
  expected.for_each([&](std::string_view name, const Matrix<float>& m) {
    shapes.emplace_back(std::string(name), std::make_pair(m.rows(), m.cols()));
  });
  std::size_t k = 0;
  params.for_each([&](std::string_view name, const Matrix<T>& m) {
    if (k >= shapes.size() || shapes[k].first != name) {
      throw ShapeError(fmt::format("unexpected tensor '{}' for this configuration", name));
    }
    const auto [rows, cols] = shapes[k].second;
    if (m.rows() != rows || m.cols() != cols) {
      throw ShapeError(fmt::format("tensor '{}' has shape {}x{}, configuration expects {}x{}", name, m.rows(),
                                   m.cols(), rows, cols));
    }
    ++k;
  });
  if (k != shapes.size()) throw ShapeError(fmt::format("missing tensor '{}'", shapes[k].first));
}

template <class T>
Matrix<T> embed(const PatchSet<T>& patches, const Linear<T>& layer, const Matrix<T>& pos, PosEncoding mode) {
  if (patches.patches.cols() != layer.in()) throw ShapeError("embed: patch length does not match embedding");
  const Index n = patches.geometry.count;
  const Index series = patches.batch * patches.channels;
  Matrix<T> out = layer.apply(patches.patches);
  const Index pos_rows = mode == PosEncoding::shared ? n : patches.channels * n;
  if (pos.rows() != pos_rows || pos.cols() != out.cols()) throw ShapeError("embed: positional encoding shape");
  for (Index s = 0; s < series; ++s) {
    const Index offset = mode == PosEncoding::shared ? 0 : (s % patches.channels) * n;
    out.middleRows(s * n, n) += pos.middleRows(offset, n);
  }
  return out;
}

template <class T>
std::vector<Matrix<T>> mpp_seasonal(const Matrix<T>& flat, const std::vector<Linear<T>>& heads) {
  std::vector<Matrix<T>> out;
  out.reserve(heads.size());
  for (const auto& head : heads) out.push_back(head.apply(flat));
  return out;
}

template <class T>
std::vector<Matrix<T>> mpp_trend(const Matrix<T>& flat, const std::vector<Linear<T>>& fc1,
                                 const std::vector<Linear<T>>& fc2, std::vector<Matrix<T>>* hidden) {
  std::vector<Matrix<T>> out;
  out.reserve(fc1.size());
  for (std::size_t i = 0; i < fc1.size(); ++i) {
    Matrix<T> h = fc1[i].apply(flat).cwiseMax(T(0));
    out.push_back(fc2[i].apply(h));
    if (hidden) hidden->push_back(std::move(h));
  }
  return out;
}

template <class T>
std::vector<Matrix<T>> mim(std::vector<Matrix<T>> z, const std::vector<Linear<T>>& mixers) {
  if (!z.empty() && mixers.size() + 1 != z.size()) throw ShapeError("mim: need one mixer per head after the first");
  for (std::size_t i = 1; i < z.size(); ++i) z[i] += mixers[i - 1].apply(z[i - 1]);
  return z;
}

template <class T>
GateWeights<T> amwg_weights(const Matrix<T>& embedded_s, const Matrix<T>& embedded_t, Index batch, Index channels,
                            Index heads, const Linear<T>& gate1, const Linear<T>& gate2, Matrix<T>* gate_input,
                            Matrix<T>* gate_hidden) {
  const Index series = batch * channels;
  const Matrix<T> flat_s = flatten_series(embedded_s, series);
  const Matrix<T> flat_t = flatten_series(embedded_t, series);
  const Vector<T> pooled_s = flat_s.rowwise().mean();
  const Vector<T> pooled_t = flat_t.rowwise().mean();

  Matrix<T> input(batch, 2 * channels);
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      input(b, c) = pooled_s(b * channels + c);
      input(b, channels + c) = pooled_t(b * channels + c);
    }
  }
  Matrix<T> hidden = gate1.apply(input).cwiseMax(T(0));
  Matrix<T> logits = gate2.apply(hidden);
  if (logits.cols() != heads * channels) throw ShapeError("amwg: gate output width must be heads * channels");

  GateWeights<T> w{heads, channels, Matrix<T>(batch, heads * channels)};
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      T top = logits(b, c);
      for (Index h = 1; h < heads; ++h) top = std::max(top, logits(b, h * channels + c));
      T sum = 0;
      for (Index h = 0; h < heads; ++h) {
        const T e = std::exp(logits(b, h * channels + c) - top);
        w(b, h, c) = e;
        sum += e;
      }
      for (Index h = 0; h < heads; ++h) w(b, h, c) /= sum;
    }
  }
  if (gate_input) *gate_input = std::move(input);
  if (gate_hidden) *gate_hidden = std::move(hidden);
  return w;
}

template <class T>
Matrix<T> interpolation_matrix(Index from, Index to) {
  if (from < 1 || to < 1 || from > to) throw ShapeError("interpolation: need 1 <= source length <= target length");
  Matrix<T> u = Matrix<T>::Zero(from, to);
  if (from == 1) {
    u.setOnes();
    return u;
  }
  for (Index j = 0; j < to; ++j) {
    const double s = static_cast<double>(j * (from - 1)) / static_cast<double>(to - 1);
    Index lo = static_cast<Index>(std::floor(s));
    double frac = s - static_cast<double>(lo);
    if (lo >= from - 1) {
      lo = from - 1;
      frac = 0.0;
    }
    u(lo, j) += static_cast<T>(1.0 - frac);
    if (frac > 0.0) u(lo + 1, j) += static_cast<T>(frac);
  }
  return u;
}

template <class T>
Matrix<T> upsample(const Matrix<T>& y, Index horizon) {
  if (y.cols() == horizon) return y;
  return y * interpolation_matrix<T>(y.cols(), horizon);
}

template <class T>
Matrix<T> fuse(const std::vector<Matrix<T>>& upsampled, const GateWeights<T>& weights) {
  const auto heads = static_cast<Index>(upsampled.size());
  if (heads == 0 || heads != weights.heads) throw ShapeError("fuse: head count does not match the gate weights");
  const Index channels = weights.channels;
  const T mean_weight = T(1) / static_cast<T>(heads);
  Matrix<T> out = Matrix<T>::Zero(upsampled[0].rows(), upsampled[0].cols());
  for (Index r = 0; r < out.rows(); ++r) {
    const Index b = r / channels;
    const Index c = r % channels;
    for (Index h = 0; h < heads; ++h) out.row(r) += (weights(b, h, c) + mean_weight) * upsampled[h].row(r);
  }
  return out;
}

template <class T>
Matrix<T> mean_fuse(const std::vector<Matrix<T>>& upsampled) {
  if (upsampled.empty()) throw ShapeError("mean_fuse: no heads");
  Matrix<T> out = upsampled[0];
  for (std::size_t h = 1; h < upsampled.size(); ++h) out += upsampled[h];
  return out / static_cast<T>(upsampled.size());
}

template <class T>
ForecastOutput<T> forward(const Panel<T>& x, const ParamSet<T>& params, const ModelConfig& cfg,
                          ForwardTrace<T>* trace) {
  if (x.channels != cfg.channels) {
    throw ShapeError(fmt::format("forward/input: expected {} channels, got {}", cfg.channels, x.channels));
  }
  if (x.length() != cfg.lookback) {
    throw ShapeError(fmt::format("forward/input: expected lookback {}, got {}", cfg.lookback, x.length()));
  }
  const auto schedule = granularity_schedule(cfg);
  const Index series = x.rows();

  ForecastOutput<T> out;
  auto normalized = instance_normalize(x);
  out.stats = std::move(normalized.stats);
  const auto parts = decompose(normalized.values, cfg.kernel);

  ForwardTrace<T> local;
  ForwardTrace<T>& tr = trace ? *trace : local;
  tr = ForwardTrace<T>{};
  tr.patches_s = patch(parts.seasonal, cfg.patch_len, cfg.stride);
  tr.patches_t = patch(parts.trend, cfg.patch_len, cfg.stride);
  tr.embedded_s = embed(tr.patches_s, params.embed_s, params.pos_s, cfg.pos_encoding);
  tr.embedded_t = embed(tr.patches_t, params.embed_t, params.pos_t, cfg.pos_encoding);

  const Matrix<T> flat_s = flatten_series(tr.embedded_s, series);
  const Matrix<T> flat_t = flatten_series(tr.embedded_t, series);
  if (params.season_heads.size() != schedule.size()) throw ShapeError("forward/mpp: head count mismatch");
  auto zs = mpp_seasonal(flat_s, params.season_heads);
  auto zt = mpp_trend(flat_t, params.trend_fc1, params.trend_fc2, &tr.trend_hidden);
  if (cfg.mixing_enabled()) {
    tr.mixed_s = mim(std::move(zs), params.mixers_s);
    tr.mixed_t = mim(std::move(zt), params.mixers_t);
  } else {
    tr.mixed_s = std::move(zs);
    tr.mixed_t = std::move(zt);
  }

  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (tr.mixed_s[i].cols() != schedule[i]) throw ShapeError("forward/mim: granularity width mismatch");
    tr.combined.push_back(tr.mixed_s[i] + tr.mixed_t[i]);
    out.upsampled.push_back(upsample(tr.combined.back(), cfg.horizon));
    out.per_granularity.push_back(instance_denormalize(Panel<T>(x.batch, x.channels, tr.combined.back()), out.stats));
  }

  Matrix<T> fused;
  if (cfg.gating_enabled()) {
    out.gate_weights = amwg_weights(tr.embedded_s, tr.embedded_t, x.batch, x.channels, cfg.active_heads(),
                                    params.gate1, params.gate2, &tr.gate_input, &tr.gate_hidden);
    fused = fuse(out.upsampled, out.gate_weights);
  } else {
    fused = mean_fuse(out.upsampled);
  }
  out.final = instance_denormalize(Panel<T>(x.batch, x.channels, std::move(fused)), out.stats);
  return out;
}

#define MDMIXER_INSTANTIATE(T)                                                                                   \
  template ParamSet<T> init_params<T>(const ModelConfig&, std::uint64_t);                                         \
  template void check_param_shapes(const ParamSet<T>&, const ModelConfig&);                                       \
  template Matrix<T> embed(const PatchSet<T>&, const Linear<T>&, const Matrix<T>&, PosEncoding);                  \
  template std::vector<Matrix<T>> mpp_seasonal(const Matrix<T>&, const std::vector<Linear<T>>&);                  \
  template std::vector<Matrix<T>> mpp_trend(const Matrix<T>&, const std::vector<Linear<T>>&,                      \
                                            const std::vector<Linear<T>>&, std::vector<Matrix<T>>*);              \
  template std::vector<Matrix<T>> mim(std::vector<Matrix<T>>, const std::vector<Linear<T>>&);                     \
  template GateWeights<T> amwg_weights(const Matrix<T>&, const Matrix<T>&, Index, Index, Index, const Linear<T>&, \
                                       const Linear<T>&, Matrix<T>*, Matrix<T>*);                                 \
  template Matrix<T> interpolation_matrix<T>(Index, Index);                                                       \
  template Matrix<T> upsample(const Matrix<T>&, Index);                                                           \
  template Matrix<T> fuse(const std::vector<Matrix<T>>&, const GateWeights<T>&);                                  \
  template Matrix<T> mean_fuse(const std::vector<Matrix<T>>&);                                                    \
  template ForecastOutput<T> forward(const Panel<T>&, const ParamSet<T>&, const ModelConfig&, ForwardTrace<T>*);

MDMIXER_INSTANTIATE(float)
MDMIXER_INSTANTIATE(double)

#undef MDMIXER_INSTANTIATE

}  // namespace mdmixer
