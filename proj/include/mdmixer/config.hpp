// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mdmixer/baselines.hpp"
#include "mdmixer/data.hpp"
#include "mdmixer/model.hpp"
#include "mdmixer/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mdmixer {

/// Everything one experiment needs. Parsed from a flat `key = value` file with
/// `#` comments; unknown keys are rejected.
struct RunConfig {
  std::string dataset;
  std::string dataset_name;  // defaults to the dataset file stem
  std::filesystem::path out = "runs";
  std::string model = "mdmixer";  // or a baseline kind
  Index max_rows = 0;              // keep only the first rows of the file; 0 keeps all
  bool channels_auto = true;
  ModelConfig model_config;
  SplitSpec split;
  TrainHyper hyper;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  Index eval_batch = 256;
  double gradcheck_h = 1e-5;
  double gradcheck_tol = 1e-4;
  Index gradcheck_batch = 2;

  bool is_baseline() const { return model != "mdmixer"; }
  BaselineConfig baseline_config() const;

  /// Cross-field checks; throws ConfigError naming the field.
  void validate() const;
  /// Fills in `channels` from the dataset when it was left on auto.
  void resolve_channels(Index dataset_channels);
  /// Every key with its resolved value, in the file format.
  std::string to_text() const;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

/// Loads the configured dataset (a relative path is tried as given, then next
/// to the config file), keeps max_rows, resolves channels and splits it.
PreparedDataset load_dataset(RunConfig& cfg, const std::filesystem::path& config_dir);

}  // namespace mdmixer
