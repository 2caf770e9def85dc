// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/data.hpp"
#include "mdmixer/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mdmixer {

template <class T>
double mse(const Panel<T>& prediction, const Panel<T>& target) {
  require_same_shape(prediction.values, target.values, "mse");
  return (prediction.values.template cast<double>() - target.values.template cast<double>()).array().square().mean();
}

template <class T>
double mae(const Panel<T>& prediction, const Panel<T>& target) {
  require_same_shape(prediction.values, target.values, "mae");
  return (prediction.values.template cast<double>() - target.values.template cast<double>()).array().abs().mean();
}

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// Runs `model.predict` over every window in order and accumulates squared and
/// absolute errors elementwise with uniform weight. Independent of `batch`.
template <class Model>
Metrics window_metrics(const Model& model, const WindowSet& windows, Index batch = 256) {
  using T = typename Model::Scalar;
  if (windows.size() == 0) throw DataError("no windows to evaluate");
  double squared = 0.0;
  double absolute = 0.0;
  double count = 0.0;
  for (Index first = 0; first < windows.size(); first += batch) {
    const auto wb = windows.range<T>(first, batch);
    const Panel<T> pred = model.predict(wb.inputs);
    const auto diff = (pred.values.template cast<double>() - wb.targets.values.template cast<double>()).array();
    squared += diff.square().sum();
    absolute += diff.abs().sum();
    count += static_cast<double>(diff.size());
  }
  return {squared / count, absolute / count};
}

struct MetricRow {
  std::string dataset;
  Index horizon = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
};

/// Test metrics in the dataset-standardized space.
template <class Model>
MetricRow evaluate(const Model& model, const WindowSet& test, std::string dataset, std::uint64_t seed,
                   Index batch = 256) {
  const Metrics m = window_metrics(model, test, batch);
  return MetricRow{std::move(dataset), test.horizon(), seed, m.mse, m.mae};
}

struct SeedSummary {
  std::string dataset;
  Index horizon = 0;
  Index runs = 0;
  double mse_mean = 0.0;
  double mse_std = 0.0;
  double mae_mean = 0.0;
  double mae_std = 0.0;
};

/// Mean and population std per (dataset, horizon), in first-seen order.
std::vector<SeedSummary> aggregate_seeds(std::span<const MetricRow> rows);

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path);
void write_summary_csv(std::span<const SeedSummary> rows, const std::filesystem::path& path);

/// Gate weights averaged over the batch: H x C, rows coarse to fine.
template <class T>
Matrix<double> mean_gate_weights(const GateWeights<T>& weights);

/// Averages the gate over the first `max_windows` windows (all if fewer).
Matrix<double> export_amwg(const ParamSet<float>& params, const ModelConfig& cfg, const WindowSet& windows,
                           Index max_windows = 256);

/// Header channel_0..channel_{C-1}; one row per head, coarse to fine.
void write_heatmap_csv(const Matrix<double>& heatmap, const std::filesystem::path& path);
Matrix<double> read_heatmap_csv(const std::filesystem::path& path);

/// Writes head_<i>.csv for every head (raw length-G_i rows followed by the
/// upsampled length-F rows, original scale) and final.csv, for one instance.
template <class T>
std::vector<std::filesystem::path> export_granularity_forecasts(const ForecastOutput<T>& output,
                                                                const std::filesystem::path& dir,
                                                                Index instance = 0);

}  // namespace mdmixer
