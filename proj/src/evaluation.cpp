// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/evaluation.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace mdmixer {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

std::string channel_header(Index channels) {
  std::string header;
  for (Index c = 0; c < channels; ++c) header += fmt::format("{}channel_{}", c == 0 ? "" : ",", c);
  return header;
}

}  // namespace

std::vector<SeedSummary> aggregate_seeds(std::span<const MetricRow> rows) {
  std::vector<SeedSummary> out;
  std::vector<std::vector<const MetricRow*>> groups;
  for (const auto& row : rows) {
    std::size_t g = 0;
    while (g < out.size() && !(out[g].dataset == row.dataset && out[g].horizon == row.horizon)) ++g;
    if (g == out.size()) {
      out.push_back(SeedSummary{row.dataset, row.horizon});
      groups.emplace_back();
    }
    groups[g].push_back(&row);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const double n = static_cast<double>(groups[g].size());
    double mse_sum = 0.0, mae_sum = 0.0;
    for (const auto* r : groups[g]) {
      mse_sum += r->mse;
      mae_sum += r->mae;
    }
    out[g].runs = static_cast<Index>(groups[g].size());
    out[g].mse_mean = mse_sum / n;
    out[g].mae_mean = mae_sum / n;
    double mse_var = 0.0, mae_var = 0.0;
    for (const auto* r : groups[g]) {
      mse_var += (r->mse - out[g].mse_mean) * (r->mse - out[g].mse_mean);
      mae_var += (r->mae - out[g].mae_mean) * (r->mae - out[g].mae_mean);
    }
    out[g].mse_std = std::sqrt(mse_var / n);
    out[g].mae_std = std::sqrt(mae_var / n);
  }
  return out;
}

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "dataset,horizon,seed,mse,mae\n";
  for (const auto& r : rows) out << fmt::format("{},{},{},{},{}\n", r.dataset, r.horizon, r.seed, r.mse, r.mae);
}

void write_summary_csv(std::span<const SeedSummary> rows, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "dataset,horizon,runs,mse,mae,mse_std,mae_std\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{}\n", r.dataset, r.horizon, r.runs, r.mse_mean, r.mae_mean, r.mse_std,
                       r.mae_std);
  }
}

template <class T>
Matrix<double> mean_gate_weights(const GateWeights<T>& weights) {
  Matrix<double> out = Matrix<double>::Zero(weights.heads, weights.channels);
  for (Index b = 0; b < weights.batch(); ++b) {
    for (Index h = 0; h < weights.heads; ++h) {
      for (Index c = 0; c < weights.channels; ++c) out(h, c) += static_cast<double>(weights(b, h, c));
    }
  }
  return out / static_cast<double>(weights.batch());
}

Matrix<double> export_amwg(const ParamSet<float>& params, const ModelConfig& cfg, const WindowSet& windows,
                           Index max_windows) {
  if (!cfg.gating_enabled()) throw ConfigError("AMWG export needs use_amwg = true and use_mpp = true");
  const auto batch = windows.range<float>(0, max_windows);
  const auto out = forward(batch.inputs, params, cfg);
  return mean_gate_weights(out.gate_weights);
}

void write_heatmap_csv(const Matrix<double>& heatmap, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << channel_header(heatmap.cols()) << '\n';
  for (Index h = 0; h < heatmap.rows(); ++h) {
    for (Index c = 0; c < heatmap.cols(); ++c) out << (c ? "," : "") << fmt::format("{}", heatmap(h, c));
    out << '\n';
  }
}

Matrix<double> read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  Matrix<double> out(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
  for (Index r = 0; r < out.rows(); ++r) {
    for (Index c = 0; c < out.cols(); ++c) out(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return out;
}

template <class T>
std::vector<std::filesystem::path> export_granularity_forecasts(const ForecastOutput<T>& output,
                                                                const std::filesystem::path& dir, Index instance) {
  const Index channels = output.final.channels;
  if (instance < 0 || instance >= output.final.batch) throw DataError("instance index out of range for export");
  std::vector<std::filesystem::path> written;
  const auto value = [](T v) { return fmt::format("{}", v); };

  for (std::size_t i = 0; i < output.per_granularity.size(); ++i) {
    const auto path = dir / fmt::format("head_{}.csv", i + 1);
    auto out = open_for_write(path);
    out << "kind,step," << channel_header(channels) << '\n';
    const auto& raw = output.per_granularity[i];
    for (Index t = 0; t < raw.length(); ++t) {
      out << "raw," << t;
      for (Index c = 0; c < channels; ++c) out << ',' << value(raw(instance, c, t));
      out << '\n';
    }
    const auto& up = output.upsampled[i];
    for (Index t = 0; t < up.cols(); ++t) {
      out << "upsampled," << t;
      for (Index c = 0; c < channels; ++c) {
        const Index r = instance * channels + c;
        out << ',' << value(up(r, t) * output.stats.std(r) + output.stats.mean(r));
      }
      out << '\n';
    }
    written.push_back(path);
  }

  const auto path = dir / "final.csv";
  auto out = open_for_write(path);
  out << "step," << channel_header(channels) << '\n';
  for (Index t = 0; t < output.final.length(); ++t) {
    out << t;
    for (Index c = 0; c < channels; ++c) out << ',' << value(output.final(instance, c, t));
    out << '\n';
  }
  written.push_back(path);
  return written;
}

template Matrix<double> mean_gate_weights(const GateWeights<float>&);
template Matrix<double> mean_gate_weights(const GateWeights<double>&);
template std::vector<std::filesystem::path> export_granularity_forecasts(const ForecastOutput<float>&,
                                                                         const std::filesystem::path&, Index);
template std::vector<std::filesystem::path> export_granularity_forecasts(const ForecastOutput<double>&,
                                                                         const std::filesystem::path&, Index);

}  // namespace mdmixer
