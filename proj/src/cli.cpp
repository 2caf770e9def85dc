// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/cli.hpp"

#include "mdmixer/baselines.hpp"
#include "mdmixer/checkpoint.hpp"
#include "mdmixer/config.hpp"
#include "mdmixer/evaluation.hpp"
#include "mdmixer/training.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace mdmixer {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  Index window = 0;
  bool parallel_seeds = false;
};

struct Loaded {
  RunConfig cfg;
  PreparedDataset data;
};

Loaded load(const Options& opt) {
  RunConfig cfg = load_run_config(opt.config);
  if (!opt.out.empty()) cfg.out = opt.out;
  if (opt.seed) cfg.seeds = {*opt.seed};
  cfg.validate();
  PreparedDataset data = load_dataset(cfg, fs::path(opt.config).parent_path());
  return Loaded{cfg, std::move(data)};
}

std::map<std::string, std::string> checkpoint_meta(const RunConfig& cfg, std::uint64_t seed) {
  return {{"model", cfg.model},
          {"seed", std::to_string(seed)},
          {"dataset", cfg.dataset_name},
          {"lookback", std::to_string(cfg.model_config.lookback)},
          {"horizon", std::to_string(cfg.model_config.horizon)},
          {"channels", std::to_string(cfg.model_config.channels)}};
}

fs::path checkpoint_stem(const std::string& text) {
  fs::path p = text;
  if (p.extension() == ".manifest" || p.extension() == ".bin") p.replace_extension();
  return p;
}

template <class Model>
Manifest load_into(Model& model, const RunConfig& cfg, const fs::path& stem) {
  if (!fs::exists(manifest_path(stem))) throw DataError("checkpoint not found: '" + manifest_path(stem).string() + "'");
  const Manifest manifest = load_checkpoint(model.params(), stem);
  const auto it = manifest.meta.find("model");
  if (it != manifest.meta.end() && it->second != cfg.model) {
    throw ConfigError(fmt::format("checkpoint holds a '{}' model but the config asks for '{}'", it->second, cfg.model));
  }
  return manifest;
}

std::uint64_t manifest_seed(const Manifest& manifest, std::uint64_t fallback) {
  const auto it = manifest.meta.find("seed");
  return it == manifest.meta.end() ? fallback : std::stoull(it->second);
}

template <class Model>
MetricRow train_one(Model& model, const Loaded& run, std::uint64_t seed, const fs::path& dir, std::ostream& out) {
  TrainHyper hyper = run.cfg.hyper;
  hyper.seed = seed;
  TrainReport report = fit(model, run.data.train, run.data.val, hyper);
  report.config_echo = run.cfg.to_text();
  fs::create_directories(dir);
  save_checkpoint(model.params(), dir / "model", checkpoint_meta(run.cfg, seed));
  report.write_csv(dir / "report.csv");
  std::ofstream(dir / "report.txt") << report.summary_text();
  const MetricRow row = evaluate(model, run.data.test, run.cfg.dataset_name, seed, run.cfg.eval_batch);
  const MetricRow rows[] = {row};
  write_metrics_csv(rows, dir / "metrics.csv");
  out << fmt::format("seed {}: best epoch {} of {}, val mse {:.6f}, test mse {:.6f}, test mae {:.6f} ({:.1f}s)\n", seed,
                     report.best_epoch, report.epochs.size(), report.best_val_mse(), row.mse, row.mae,
                     report.wall_seconds);
  return row;
}

void train_seed(const Loaded& run, std::uint64_t seed, std::ostream& out) {
  const fs::path dir = run.cfg.out / fmt::format("seed_{}", seed);
  if (run.cfg.is_baseline()) {
    Baseline<float> model(run.cfg.baseline_config(), seed);
    train_one(model, run, seed, dir, out);
  } else {
    MDMixer<float> model(run.cfg.model_config, seed);
    train_one(model, run, seed, dir, out);
  }
}

MetricRow read_seed_row(const fs::path& path) {
  std::ifstream in(path);
  std::string header;
  std::string line;
  if (!in || !std::getline(in, header) || !std::getline(in, line)) throw DataError("missing seed metrics '" + path.string() + "'");
  std::stringstream ss(line);
  std::string field;
  std::vector<std::string> parts;
  while (std::getline(ss, field, ',')) parts.push_back(field);
  if (parts.size() != 5) throw DataError("malformed seed metrics '" + path.string() + "'");
  return MetricRow{parts[0], std::stol(parts[1]), std::stoull(parts[2]), std::stod(parts[3]), std::stod(parts[4])};
}

int error_code(const std::exception_ptr& e, std::ostream& err) {
  try {
    std::rethrow_exception(e);
  } catch (const DivergenceError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitDivergence;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const DataError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
}

int cmd_train(const Options& opt, std::ostream& out, std::ostream& err) {
  const Loaded run = load(opt);
  fs::create_directories(run.cfg.out);
  std::ofstream(run.cfg.out / "config.resolved") << run.cfg.to_text();

  if (opt.parallel_seeds && run.cfg.seeds.size() > 1) {
    std::vector<pid_t> children;
    out.flush();
    err.flush();
    for (const auto seed : run.cfg.seeds) {
      const pid_t pid = fork();
      if (pid < 0) throw std::runtime_error("fork failed");
      if (pid == 0) {
        int code = kExitOk;
        try {
          std::ostringstream log;
          train_seed(run, seed, log);
          out << log.str();
          out.flush();
        } catch (...) {
          code = error_code(std::current_exception(), err);
          err.flush();
        }
        _exit(code);
      }
      children.push_back(pid);
    }
    int worst = kExitOk;
    for (const pid_t pid : children) {
      int status = 0;
      waitpid(pid, &status, 0);
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitFailure;
      if (code != kExitOk && worst == kExitOk) worst = code;
    }
    if (worst != kExitOk) return worst;
  } else {
    for (const auto seed : run.cfg.seeds) train_seed(run, seed, out);
  }

  std::vector<MetricRow> rows;
  for (const auto seed : run.cfg.seeds) rows.push_back(read_seed_row(run.cfg.out / fmt::format("seed_{}", seed) / "metrics.csv"));
  write_metrics_csv(rows, run.cfg.out / "metrics.csv");
  const auto summary = aggregate_seeds(rows);
  write_summary_csv(summary, run.cfg.out / "summary.csv");
  for (const auto& s : summary) {
    out << fmt::format("{} F={} over {} seed(s): mse {:.4f} +- {:.4f}, mae {:.4f} +- {:.4f}\n", s.dataset, s.horizon,
                       s.runs, s.mse_mean, s.mse_std, s.mae_mean, s.mae_std);
  }
  return kExitOk;
}

fs::path output_dir(const Options& opt, const fs::path& stem) {
  if (!opt.out.empty()) return opt.out;
  return stem.has_parent_path() ? stem.parent_path() : fs::path(".");
}

int cmd_eval(const Options& opt, std::ostream& out) {
  if (opt.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  Options local = opt;
  local.out.clear();
  const Loaded run = load(local);
  const fs::path stem = checkpoint_stem(opt.checkpoint);
  MetricRow row;
  if (run.cfg.is_baseline()) {
    Baseline<float> model(run.cfg.baseline_config(), 0);
    const auto manifest = load_into(model, run.cfg, stem);
    row = evaluate(model, run.data.test, run.cfg.dataset_name, manifest_seed(manifest, 0), run.cfg.eval_batch);
  } else {
    MDMixer<float> model(run.cfg.model_config, 0);
    const auto manifest = load_into(model, run.cfg, stem);
    row = evaluate(model, run.data.test, run.cfg.dataset_name, manifest_seed(manifest, 0), run.cfg.eval_batch);
  }
  const fs::path dir = output_dir(opt, stem);
  fs::create_directories(dir);
  const MetricRow rows[] = {row};
  write_metrics_csv(rows, dir / "metrics.csv");
  out << fmt::format("{} F={} seed {}: mse {:.6f}, mae {:.6f}\n", row.dataset, row.horizon, row.seed, row.mse, row.mae);
  return kExitOk;
}

void write_final_csv(const Panel<float>& final, const fs::path& path) {
  std::ofstream f(path);
  f << "step";
  for (Index c = 0; c < final.channels; ++c) f << ",channel_" << c;
  f << '\n';
  for (Index t = 0; t < final.length(); ++t) {
    f << t;
    for (Index c = 0; c < final.channels; ++c) f << ',' << fmt::format("{}", final(0, c, t));
    f << '\n';
  }
}

int cmd_forecast(const Options& opt, std::ostream& out) {
  if (opt.checkpoint.empty()) throw ConfigError("forecast needs --checkpoint");
  Options local = opt;
  local.out.clear();
  const Loaded run = load(local);
  const WindowSet& test = run.data.test;
  if (opt.window < 0 || opt.window >= test.size()) {
    throw ConfigError(fmt::format("window {} is out of range: the test split has {} windows", opt.window, test.size()));
  }
  const fs::path stem = checkpoint_stem(opt.checkpoint);
  const fs::path dir = opt.out.empty() ? output_dir(opt, stem) / fmt::format("forecast_{}", opt.window) : fs::path(opt.out);
  fs::create_directories(dir);
  const auto wb = test.range<float>(opt.window, 1);
  if (run.cfg.is_baseline()) {
    Baseline<float> model(run.cfg.baseline_config(), 0);
    load_into(model, run.cfg, stem);
    write_final_csv(model.predict(wb.inputs), dir / "final.csv");
    out << "wrote " << (dir / "final.csv").string() << '\n';
    return kExitOk;
  }
  MDMixer<float> model(run.cfg.model_config, 0);
  load_into(model, run.cfg, stem);
  const ForecastOutput<float> output = model.run(wb.inputs);
  for (const auto& p : export_granularity_forecasts(output, dir, 0)) out << "wrote " << p.string() << '\n';
  if (run.cfg.model_config.gating_enabled()) {
    write_heatmap_csv(mean_gate_weights(output.gate_weights), dir / "amwg.csv");
    out << "wrote " << (dir / "amwg.csv").string() << '\n';
  }
  return kExitOk;
}

int cmd_export_weights(const Options& opt, std::ostream& out) {
  if (opt.checkpoint.empty()) throw ConfigError("export-weights needs --checkpoint");
  Options local = opt;
  local.out.clear();
  const Loaded run = load(local);
  if (run.cfg.is_baseline()) throw ConfigError("config field 'model': export-weights needs an mdmixer model");
  const fs::path stem = checkpoint_stem(opt.checkpoint);
  MDMixer<float> model(run.cfg.model_config, 0);
  load_into(model, run.cfg, stem);
  const Matrix<double> heatmap = export_amwg(model.params(), run.cfg.model_config, run.data.test);
  fs::path path = opt.out.empty() ? output_dir(opt, stem) / "amwg.csv" : fs::path(opt.out);
  if (fs::is_directory(path)) path /= "amwg.csv";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_heatmap_csv(heatmap, path);
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Options& opt, std::ostream& out) {
  RunConfig cfg = load_run_config(opt.config);
  if (opt.seed) cfg.seeds = {*opt.seed};
  if (cfg.is_baseline()) throw ConfigError("config field 'model': gradcheck runs on the mdmixer model");
  if (cfg.channels_auto) throw ConfigError("config field 'channels': gradcheck needs an explicit channel count");
  cfg.validate();
  const GradcheckReport r =
      gradcheck(cfg.model_config, cfg.seeds.front(), cfg.gradcheck_h, cfg.gradcheck_tol, cfg.gradcheck_batch);
  out << fmt::format("checked {} entries, max relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})\n",
                     r.checked, r.max_rel_err, r.worst_param, r.worst_index, r.analytic, r.numeric);
  out << (r.passed ? "gradcheck passed" : "gradcheck FAILED") << fmt::format(" (tol {:.1e})\n", cfg.gradcheck_tol);
  return r.passed ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-granularity mixer for long-term time series forecasting", "mdmixer"};
  app.require_subcommand(1);
  Options opt;
  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Run configuration file")->required();
    sub->add_option("--seed", opt.seed, "Override the configured seeds with one seed");
  };

  auto* train = app.add_subcommand("train", "Train one model per seed, then evaluate on the test split");
  common(train);
  train->add_option("--out", opt.out, "Output directory (overrides the config)");
  train->add_flag("--parallel-seeds", opt.parallel_seeds, "Train the seeds in separate processes");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  common(eval);
  eval->add_option("--checkpoint", opt.checkpoint, "Checkpoint stem or manifest path")->required();
  eval->add_option("--out", opt.out, "Directory for metrics.csv");

  auto* forecast = app.add_subcommand("forecast", "Write per-granularity and fused forecasts for one test window");
  common(forecast);
  forecast->add_option("--checkpoint", opt.checkpoint, "Checkpoint stem or manifest path")->required();
  forecast->add_option("--window", opt.window, "Test window index");
  forecast->add_option("--out", opt.out, "Output directory");

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  common(grad);

  auto* weights = app.add_subcommand("export-weights", "Average gate weights over the test split as a heatmap");
  common(weights);
  weights->add_option("--checkpoint", opt.checkpoint, "Checkpoint stem or manifest path")->required();
  weights->add_option("--out", opt.out, "Output file or directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(opt, out, err);
    if (eval->parsed()) return cmd_eval(opt, out);
    if (forecast->parsed()) return cmd_forecast(opt, out);
    if (grad->parsed()) return cmd_gradcheck(opt, out);
    if (weights->parsed()) return cmd_export_weights(opt, out);
  } catch (...) {
    return error_code(std::current_exception(), err);
  }
  return kExitUsage;
}

}  // namespace mdmixer
