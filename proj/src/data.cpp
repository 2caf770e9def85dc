// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/data.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace mdmixer {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_finite(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

SeriesFrame SeriesFrame::slice(Index begin, Index end) const {
  if (begin < 0 || end > length() || begin > end) {
    throw DataError(fmt::format("slice [{}, {}) out of range for length {}", begin, end, length()));
  }
  SeriesFrame out;
  out.values = values.middleRows(begin, end - begin);
  out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
  out.channel_names = channel_names;
  return out;
}

SeriesFrame read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw DataError("empty file");
  auto header = split_fields(trim(line));
  if (header.size() < 2) throw DataError("header must have a timestamp column and at least one value column");

  SeriesFrame frame;
  for (std::size_t i = 1; i < header.size(); ++i) frame.channel_names.push_back(trim(header[i]));
  const std::size_t columns = header.size();

  std::vector<double> flat;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != columns) {
      throw DataError(fmt::format("malformed row {}: expected {} columns, got {}", row, columns, fields.size()));
    }
    frame.timestamps.push_back(trim(fields[0]));
    for (std::size_t c = 1; c < columns; ++c) {
      double v = 0.0;
      if (!parse_finite(trim(fields[c]), v)) {
        throw DataError(fmt::format("non-numeric value, column '{}', row {}", frame.channel_names[c - 1], row));
      }
      flat.push_back(v);
    }
  }
  if (frame.timestamps.empty()) throw DataError("empty file: no data rows");

  const auto n = static_cast<Index>(frame.timestamps.size());
  const auto c = static_cast<Index>(columns - 1);
  frame.values = Eigen::Map<Matrix<double>>(flat.data(), n, c);
  return frame;
}

SeriesFrame load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path.string() + "'");
  return read_csv(in);
}

void write_csv(const SeriesFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "date";
  for (const auto& name : frame.channel_names) out << ',' << name;
  out << '\n';
  for (Index t = 0; t < frame.length(); ++t) {
    out << frame.timestamps[static_cast<std::size_t>(t)];
    for (Index c = 0; c < frame.channels(); ++c) out << ',' << fmt::format("{}", frame.values(t, c));
    out << '\n';
  }
}

std::pair<SeriesFrame, ChannelStats> standardize(const SeriesFrame& frame,
                                                 const std::optional<ChannelStats>& stats) {
  ChannelStats used;
  if (stats) {
    used = *stats;
    if (used.mean.size() != static_cast<std::size_t>(frame.channels()) || used.std.size() != used.mean.size()) {
      throw DataError("standardization stats do not match the channel count");
    }
  } else {
    const double n = static_cast<double>(frame.length());
    for (Index c = 0; c < frame.channels(); ++c) {
      const auto col = frame.values.col(c);
      const double mean = col.sum() / n;
      const double var = (col.array() - mean).square().sum() / n;
      used.mean.push_back(mean);
      used.std.push_back(std::max(std::sqrt(var), kDatasetStdFloor));
    }
  }
  SeriesFrame out = frame;
  for (Index c = 0; c < frame.channels(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    out.values.col(c) = (frame.values.col(c).array() - used.mean[i]) / used.std[i];
  }
  return {std::move(out), std::move(used)};
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError(fmt::format("split ratios must sum to 1 (got {})", sum));
  if (lookback < 1) throw ConfigError("lookback must be positive");
  if (horizon < 1) throw ConfigError("horizon must be positive");
}

DataSplits chronological_split(const SeriesFrame& frame, const SplitSpec& spec) {
  spec.validate();
  const Index total = frame.length();
  // The epsilon keeps exact products such as 0.6 * 17420 from flooring one short.
  const auto border = [&](double r) {
    return std::min<Index>(total, static_cast<Index>(std::floor(r * static_cast<double>(total) + 1e-9)));
  };
  const Index b1 = border(spec.ratios[0]);
  const Index b2 = border(spec.ratios[0] + spec.ratios[1]);
  const Index window = spec.lookback + spec.horizon;

  const auto check = [&](const char* name, Index begin, Index end) {
    if (begin < 0 || end - begin < window) {
      throw DataError(fmt::format("{} segment too short: need {} rows for one window", name, window));
    }
  };
  check("train", 0, b1);
  check("val", b1 - spec.lookback, b2);
  check("test", b2 - spec.lookback, total);

  DataSplits out;
  out.train = frame.slice(0, b1);
  out.val = frame.slice(b1 - spec.lookback, b2);
  out.test = frame.slice(b2 - spec.lookback, total);
  out.train_end = b1;
  out.val_end = b2;
  return out;
}

WindowSet::WindowSet(const SeriesFrame& frame, Index lookback, Index horizon)
    : values_(frame.values), lookback_(lookback), horizon_(horizon) {
  if (lookback < 1 || horizon < 1) throw ConfigError("lookback and horizon must be positive");
  if (frame.length() < lookback + horizon) {
    throw DataError(fmt::format("frame of length {} is shorter than lookback + horizon = {}", frame.length(),
                                lookback + horizon));
  }
  count_ = frame.length() - lookback - horizon + 1;
}

template <class T>
WindowBatch<T> WindowSet::gather(std::span<const Index> starts) const {
  const auto batch = static_cast<Index>(starts.size());
  const Index channels = values_.cols();
  WindowBatch<T> out{Panel<T>(batch, channels, lookback_), Panel<T>(batch, channels, horizon_)};
  for (Index b = 0; b < batch; ++b) {
    const Index start = starts[static_cast<std::size_t>(b)];
    if (start < 0 || start >= count_) throw DataError(fmt::format("window index {} out of range", start));
    for (Index c = 0; c < channels; ++c) {
      out.inputs.values.row(b * channels + c) =
          values_.col(c).segment(start, lookback_).transpose().template cast<T>();
      out.targets.values.row(b * channels + c) =
          values_.col(c).segment(start + lookback_, horizon_).transpose().template cast<T>();
    }
  }
  return out;
}

template <class T>
WindowBatch<T> WindowSet::range(Index first, Index count) const {
  const Index last = std::min(count_, first + count);
  std::vector<Index> starts;
  for (Index k = first; k < last; ++k) starts.push_back(k);
  return gather<T>(starts);
}

template WindowBatch<float> WindowSet::gather<float>(std::span<const Index>) const;
template WindowBatch<double> WindowSet::gather<double>(std::span<const Index>) const;
template WindowBatch<float> WindowSet::range<float>(Index, Index) const;
template WindowBatch<double> WindowSet::range<double>(Index, Index) const;

WindowSet make_windows(const SeriesFrame& frame, Index lookback, Index horizon) {
  return WindowSet(frame, lookback, horizon);
}

PreparedDataset prepare_dataset(const SeriesFrame& frame, const SplitSpec& spec) {
  DataSplits splits = chronological_split(frame, spec);
  auto [train, stats] = standardize(splits.train, std::nullopt);
  splits.train = std::move(train);
  splits.val = standardize(splits.val, stats).first;
  splits.test = standardize(splits.test, stats).first;
  WindowSet train_windows(splits.train, spec.lookback, spec.horizon);
  WindowSet val_windows(splits.val, spec.lookback, spec.horizon);
  WindowSet test_windows(splits.test, spec.lookback, spec.horizon);
  return PreparedDataset{std::move(splits), std::move(stats), std::move(train_windows), std::move(val_windows),
                         std::move(test_windows)};
}

SeriesFrame synth_multiscale(Index n, std::span<const SynthChannel> channels, std::uint64_t seed) {
  if (n < 1) throw ConfigError("synthetic series length must be positive");
  if (channels.empty()) throw ConfigError("synthetic series needs at least one channel");
  SeriesFrame frame;
  frame.values = Matrix<double>::Zero(n, static_cast<Index>(channels.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& spec = channels[c];
    if (spec.period < 2.0) throw ConfigError("synthetic period must be at least 2");
    frame.channel_names.push_back("ch" + std::to_string(c));
    for (Index t = 0; t < n; ++t) {
      const double td = static_cast<double>(t);
      double v = spec.amplitude * std::sin(2.0 * std::numbers::pi * td / spec.period) + spec.slope * td;
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
      frame.values(t, static_cast<Index>(c)) = v;
    }
  }
  for (Index t = 0; t < n; ++t) frame.timestamps.push_back("t" + std::to_string(t));
  return frame;
}

}  // namespace mdmixer
