// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/tensor.hpp"

namespace mdmixer {

inline constexpr double kInstanceEps = 1e-5;

/// Per (instance, channel) statistics; one entry per panel row.
template <class T>
struct InstanceStats {
  Vector<T> mean;
  Vector<T> std;
};

template <class T>
struct NormalizedPanel {
  Panel<T> values;
  InstanceStats<T> stats;
};

/// Subtracts each row's mean and divides by its population std (floored at kInstanceEps).
template <class T>
NormalizedPanel<T> instance_normalize(const Panel<T>& x);

/// y * std + mean per row; the length of `y` is arbitrary.
template <class T>
Panel<T> instance_denormalize(const Panel<T>& y, const InstanceStats<T>& stats);

template <class T>
struct DecomposedWindow {
  Panel<T> trend;
  Panel<T> seasonal;
};

/// Centered moving average with replicate-edge padding of (kernel - 1) / 2 on
/// each side; seasonal is the residual. Kernel must be odd.
template <class T>
DecomposedWindow<T> decompose(const Panel<T>& x, Index kernel);

struct PatchGeometry {
  Index patch_len = 0;
  Index stride = 0;
  Index count = 0;

  Index padded_length() const { return (count - 1) * stride + patch_len; }

  /// N = floor((T - P) / S) + 2.
  static PatchGeometry for_lookback(Index lookback, Index patch_len, Index stride);
};

/// Patches of every row. Row (b * C + c) * N + n of `patches` holds patch n of
/// series (b, c), so rows of one series are contiguous.
template <class T>
struct PatchSet {
  PatchGeometry geometry;
  Index batch = 0;
  Index channels = 0;
  Matrix<T> patches;
};

/// Zero-pads each series at the end to the padded length, then cuts N
/// overlapping patches of length P with stride S.
template <class T>
PatchSet<T> patch(const Panel<T>& x, Index patch_len, Index stride);

}  // namespace mdmixer
