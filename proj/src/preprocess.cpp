// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/preprocess.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mdmixer {

template <class T>
NormalizedPanel<T> instance_normalize(const Panel<T>& x) {
  if (x.length() < 1) throw ShapeError("instance_normalize: empty window");
  const T n = static_cast<T>(x.length());
  NormalizedPanel<T> out{Panel<T>(x.batch, x.channels, x.length()), {}};
  out.stats.mean = x.values.rowwise().sum() / n;
  out.stats.std.resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const T var = (x.values.row(r).array() - out.stats.mean(r)).square().sum() / n;
    out.stats.std(r) = std::max(std::sqrt(var), static_cast<T>(kInstanceEps));
    out.values.values.row(r) = (x.values.row(r).array() - out.stats.mean(r)) / out.stats.std(r);
  }
  return out;
}

template <class T>
Panel<T> instance_denormalize(const Panel<T>& y, const InstanceStats<T>& stats) {
  if (stats.mean.size() != y.rows() || stats.std.size() != y.rows()) {
    throw ShapeError("instance_denormalize: stats do not match the panel rows");
  }
  Panel<T> out(y.batch, y.channels, y.length());
  for (Index r = 0; r < y.rows(); ++r) {
    out.values.row(r) = y.values.row(r).array() * stats.std(r) + stats.mean(r);
  }
  return out;
}

template <class T>
DecomposedWindow<T> decompose(const Panel<T>& x, Index kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError(fmt::format("decomposition kernel must be odd and positive (got {})", kernel));
  }
  const Index len = x.length();
  const Index half = (kernel - 1) / 2;
  DecomposedWindow<T> out{Panel<T>(x.batch, x.channels, len), Panel<T>(x.batch, x.channels, len)};
  for (Index r = 0; r < x.rows(); ++r) {
    const auto row = x.values.row(r);
    for (Index t = 0; t < len; ++t) {
      T sum = 0;
      for (Index k = t - half; k <= t + half; ++k) sum += row(std::clamp<Index>(k, 0, len - 1));
      out.trend.values(r, t) = sum / static_cast<T>(kernel);
    }
  }
  out.seasonal.values = x.values - out.trend.values;
  return out;
}

PatchGeometry PatchGeometry::for_lookback(Index lookback, Index patch_len, Index stride) {
  if (patch_len < 1 || stride < 1) throw ConfigError("patch length and stride must be positive");
  if (patch_len > lookback) {
    throw ConfigError(fmt::format("patch length {} exceeds lookback {}", patch_len, lookback));
  }
  return PatchGeometry{patch_len, stride, (lookback - patch_len) / stride + 2};
}

template <class T>
PatchSet<T> patch(const Panel<T>& x, Index patch_len, Index stride) {
  PatchSet<T> out;
  out.geometry = PatchGeometry::for_lookback(x.length(), patch_len, stride);
  out.batch = x.batch;
  out.channels = x.channels;
  const Index count = out.geometry.count;
  const Index len = x.length();
  out.patches = Matrix<T>::Zero(x.rows() * count, patch_len);
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index n = 0; n < count; ++n) {
      const Index start = n * stride;
      const Index avail = std::clamp<Index>(len - start, 0, patch_len);
      if (avail > 0) out.patches.row(r * count + n).head(avail) = x.values.row(r).segment(start, avail);
    }
  }
  return out;
}

template NormalizedPanel<float> instance_normalize(const Panel<float>&);
template NormalizedPanel<double> instance_normalize(const Panel<double>&);
template Panel<float> instance_denormalize(const Panel<float>&, const InstanceStats<float>&);
template Panel<double> instance_denormalize(const Panel<double>&, const InstanceStats<double>&);
template DecomposedWindow<float> decompose(const Panel<float>&, Index);
template DecomposedWindow<double> decompose(const Panel<double>&, Index);
template PatchSet<float> patch(const Panel<float>&, Index, Index);
template PatchSet<double> patch(const Panel<double>&, Index, Index);

}  // namespace mdmixer
