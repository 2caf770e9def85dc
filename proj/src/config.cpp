// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mdmixer {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

[[noreturn]] void field_error(const std::string& key, const std::string& message) {
  throw ConfigError(fmt::format("config field '{}': {}", key, message));
}

Index parse_int(const std::string& key, const std::string& v) {
  Index out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) field_error(key, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) field_error(key, "expected a nonnegative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) field_error(key, "expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  field_error(key, "expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset = v; }},
      {"dataset_name", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_name = v; }},
      {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      {"model", [](RunConfig& c, const std::string&, const std::string& v) { c.model = v; }},
      {"max_rows", [](RunConfig& c, const std::string& k, const std::string& v) { c.max_rows = parse_int(k, v); }},
      {"seeds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) c.seeds.push_back(parse_seed(k, s));
       }},
      {"lookback", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.lookback = parse_int(k, v); }},
      {"horizon", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.horizon = parse_int(k, v); }},
      {"channels",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.channels_auto = v == "auto";
         if (!c.channels_auto) c.model_config.channels = parse_int(k, v);
       }},
      {"patch_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.patch_len = parse_int(k, v); }},
      {"stride", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.stride = parse_int(k, v); }},
      {"embed_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.embed_dim = parse_int(k, v); }},
      {"heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.heads = parse_int(k, v); }},
      {"hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.hidden = parse_int(k, v); }},
      {"kernel", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.kernel = parse_int(k, v); }},
      {"alpha", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.align_weight = parse_real(k, v); }},
      {"use_mpp", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.use_mpp = parse_bool(k, v); }},
      {"use_mim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.use_mim = parse_bool(k, v); }},
      {"use_amwg", [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.use_amwg = parse_bool(k, v); }},
      {"use_align_loss",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.model_config.use_align_loss = parse_bool(k, v); }},
      {"pos_encoding",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "shared") {
           c.model_config.pos_encoding = PosEncoding::shared;
         } else if (v == "per_channel") {
           c.model_config.pos_encoding = PosEncoding::per_channel;
         } else {
           field_error(k, "expected shared or per_channel, got '" + v + "'");
         }
       }},
      {"split",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto parts = split_list(v);
         if (parts.size() != 3) field_error(k, "expected three comma-separated ratios");
         for (std::size_t i = 0; i < 3; ++i) c.split.ratios[i] = parse_real(k, parts[i]);
       }},
      {"lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.hyper.lr = parse_real(k, v); }},
      {"batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.hyper.batch_size = parse_int(k, v); }},
      {"max_epochs",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.hyper.max_epochs = static_cast<int>(parse_int(k, v)); }},
      {"patience",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.hyper.patience = static_cast<int>(parse_int(k, v)); }},
      {"weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.hyper.weight_decay = parse_real(k, v); }},
      {"eval_batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_batch = parse_int(k, v); }},
      {"gradcheck_h", [](RunConfig& c, const std::string& k, const std::string& v) { c.gradcheck_h = parse_real(k, v); }},
      {"gradcheck_tol", [](RunConfig& c, const std::string& k, const std::string& v) { c.gradcheck_tol = parse_real(k, v); }},
      {"gradcheck_batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.gradcheck_batch = parse_int(k, v); }},
  };
  return table;
}

}  // namespace

BaselineConfig RunConfig::baseline_config() const {
  const auto kind = parse_baseline_kind(model);
  if (!kind) field_error("model", "unknown model '" + model + "'");
  return BaselineConfig{*kind, model_config.lookback, model_config.horizon, model_config.channels, model_config.hidden,
                        model_config.kernel};
}

void RunConfig::validate() const {
  if (model != "mdmixer" && !parse_baseline_kind(model)) {
    field_error("model", "expected mdmixer, linear_direct, decomp_linear or dual_branch, got '" + model + "'");
  }
  const auto wrap = [](const char* key, const auto& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      field_error(key, e.what());
    }
  };
  if (is_baseline()) {
    wrap("model", [&] { baseline_config().validate(); });
  } else {
    std::string key = "model";
    const auto& m = model_config;
    if (m.horizon >= 1 && m.heads >= 1 && m.horizon % m.heads != 0) key = "heads";
    if (m.patch_len > m.lookback) key = "patch_len";
    if (m.kernel < 1 || m.kernel % 2 == 0) key = "kernel";
    wrap(key.c_str(), [&] { model_config.validate(); });
  }
  SplitSpec s = split;
  s.lookback = model_config.lookback;
  s.horizon = model_config.horizon;
  wrap("split", [&] { s.validate(); });
  if (seeds.empty()) field_error("seeds", "at least one seed is required");
  if (hyper.batch_size < 1) field_error("batch_size", "must be >= 1");
  if (hyper.max_epochs < 1) field_error("max_epochs", "must be >= 1");
  if (hyper.patience < 0) field_error("patience", "must be >= 0");
  if (!(hyper.lr > 0.0)) field_error("lr", "must be > 0");
  if (max_rows < 0) field_error("max_rows", "must be >= 0");
  if (eval_batch < 1) field_error("eval_batch", "must be >= 1");
  if (!(gradcheck_h > 0.0)) field_error("gradcheck_h", "must be > 0");
  if (gradcheck_batch < 1) field_error("gradcheck_batch", "must be >= 1");
}

void RunConfig::resolve_channels(Index dataset_channels) {
  if (channels_auto) {
    model_config.channels = dataset_channels;
    channels_auto = false;
  } else if (model_config.channels != dataset_channels) {
    field_error("channels", fmt::format("configured {} but the dataset has {}", model_config.channels, dataset_channels));
  }
}

std::string RunConfig::to_text() const {
  const auto& m = model_config;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  std::string seed_list;
  for (std::size_t i = 0; i < seeds.size(); ++i) seed_list += (i ? "," : "") + std::to_string(seeds[i]);
  std::string text;
  text += fmt::format("dataset = {}\n", dataset);
  text += fmt::format("dataset_name = {}\n", dataset_name);
  text += fmt::format("out = {}\n", out.string());
  text += fmt::format("model = {}\n", model);
  text += fmt::format("max_rows = {}\n", max_rows);
  text += fmt::format("seeds = {}\n", seed_list);
  text += fmt::format("lookback = {}\nhorizon = {}\n", m.lookback, m.horizon);
  text += channels_auto ? std::string("channels = auto\n") : fmt::format("channels = {}\n", m.channels);
  text += fmt::format("patch_len = {}\nstride = {}\nembed_dim = {}\nheads = {}\nhidden = {}\nkernel = {}\n",
                      m.patch_len, m.stride, m.embed_dim, m.heads, m.hidden, m.kernel);
  text += fmt::format("alpha = {}\n", m.align_weight);
  text += fmt::format("use_mpp = {}\nuse_mim = {}\nuse_amwg = {}\nuse_align_loss = {}\n", b(m.use_mpp),
                      b(m.use_mim), b(m.use_amwg), b(m.use_align_loss));
  text += fmt::format("pos_encoding = {}\n", m.pos_encoding == PosEncoding::shared ? "shared" : "per_channel");
  text += fmt::format("split = {},{},{}\n", split.ratios[0], split.ratios[1], split.ratios[2]);
  text += fmt::format("lr = {}\nbatch_size = {}\nmax_epochs = {}\npatience = {}\nweight_decay = {}\n", hyper.lr,
                      hyper.batch_size, hyper.max_epochs, hyper.patience, hyper.weight_decay);
  text += fmt::format("eval_batch = {}\n", eval_batch);
  text += fmt::format("gradcheck_h = {}\ngradcheck_tol = {}\ngradcheck_batch = {}\n", gradcheck_h, gradcheck_tol,
                      gradcheck_batch);
  return text;
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected 'key = value'", lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(fmt::format("config line {}: unknown key '{}'", lineno, key));
    it->second(cfg, key, value);
  }
  if (cfg.dataset_name.empty() && !cfg.dataset.empty()) {
    cfg.dataset_name = std::filesystem::path(cfg.dataset).stem().string();
  }
  cfg.split.lookback = cfg.model_config.lookback;
  cfg.split.horizon = cfg.model_config.horizon;
  cfg.hyper.seed = cfg.seeds.empty() ? 1 : cfg.seeds.front();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_run_config(in);
}

PreparedDataset load_dataset(RunConfig& cfg, const std::filesystem::path& config_dir) {
  if (cfg.dataset.empty()) field_error("dataset", "no dataset path given");
  std::filesystem::path path = cfg.dataset;
  if (path.is_relative() && !std::filesystem::exists(path) && std::filesystem::exists(config_dir / path)) {
    path = config_dir / path;
  }
  if (!std::filesystem::exists(path)) throw DataError("dataset file not found: '" + cfg.dataset + "'");
  SeriesFrame frame = load_csv(path);
  if (cfg.max_rows > 0 && cfg.max_rows < frame.length()) frame = frame.slice(0, cfg.max_rows);
  cfg.resolve_channels(frame.channels());
  cfg.validate();
  SplitSpec spec = cfg.split;
  spec.lookback = cfg.model_config.lookback;
  spec.horizon = cfg.model_config.horizon;
  return prepare_dataset(frame, spec);
}

}  // namespace mdmixer
