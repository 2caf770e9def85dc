// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mdmixer {

/// Raw multivariate series: values is T_total x C, one row per timestamp.
struct SeriesFrame {
  Matrix<double> values;
  std::vector<std::string> timestamps;
  std::vector<std::string> channel_names;

  Index length() const { return values.rows(); }
  Index channels() const { return values.cols(); }

  /// Rows [begin, end).
  SeriesFrame slice(Index begin, Index end) const;
};

/// Reads an ETT-style CSV: header row, timestamp column, then numeric columns.
/// Throws DataError naming the offending row (1-based file line) or column.
SeriesFrame load_csv(const std::filesystem::path& path);
SeriesFrame read_csv(std::istream& in);
void write_csv(const SeriesFrame& frame, const std::filesystem::path& path);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kDatasetStdFloor = 1e-8;

/// Z-scores every channel. With no stats given, population mean/std of `frame`
/// are computed (this is the train frame) and returned for reuse.
std::pair<SeriesFrame, ChannelStats> standardize(const SeriesFrame& frame,
                                                 const std::optional<ChannelStats>& stats);

struct SplitSpec {
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  Index lookback = 96;
  Index horizon = 96;

  void validate() const;
};

struct DataSplits {
  SeriesFrame train;
  SeriesFrame val;
  SeriesFrame test;
  Index train_end = 0;  // b1
  Index val_end = 0;    // b2
};

/// train = [0, b1), val = [b1 - T, b2), test = [b2 - T, T_total). Val and test
/// reach back one lookback so their first target starts at the boundary.
DataSplits chronological_split(const SeriesFrame& frame, const SplitSpec& spec);

template <class T>
struct WindowBatch {
  Panel<T> inputs;   // B x C x T
  Panel<T> targets;  // B x C x F
};

/// Every supervised window of a frame, stride 1. Window k has input rows
/// [k, k + T) and target rows [k + T, k + T + F).
class WindowSet {
 public:
  WindowSet(const SeriesFrame& frame, Index lookback, Index horizon);

  Index size() const { return count_; }
  Index lookback() const { return lookback_; }
  Index horizon() const { return horizon_; }
  Index channels() const { return values_.cols(); }

  template <class T>
  WindowBatch<T> gather(std::span<const Index> starts) const;

  /// Windows [first, first + count), clipped to the set size.
  template <class T>
  WindowBatch<T> range(Index first, Index count) const;

 private:
  Matrix<double> values_;
  Index lookback_;
  Index horizon_;
  Index count_;
};

WindowSet make_windows(const SeriesFrame& frame, Index lookback, Index horizon);

/// Chronological split, each segment standardized with train statistics, and
/// the window sets of all three.
struct PreparedDataset {
  DataSplits splits;
  ChannelStats stats;
  WindowSet train;
  WindowSet val;
  WindowSet test;
};

PreparedDataset prepare_dataset(const SeriesFrame& frame, const SplitSpec& spec);

struct SynthChannel {
  double period = 16.0;
  double amplitude = 1.0;
  double slope = 0.0;
  double noise_sigma = 0.0;
};

/// amplitude * sin(2 pi t / period) + slope * t + N(0, sigma^2), pure in (n, spec, seed).
SeriesFrame synth_multiscale(Index n, std::span<const SynthChannel> channels, std::uint64_t seed);

}  // namespace mdmixer
