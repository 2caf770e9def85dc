// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "mdmixer/baselines.hpp"
#include "mdmixer/config.hpp"
#include "mdmixer/evaluation.hpp"
#include "mdmixer/training.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <iostream>
#include <random>

using namespace mdmixer;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS " : "FAIL ") << id << ": " << detail << std::endl;
}

fs::path config_dir() { return fs::path(MDMIXER_SOURCE_DIR) / "configs"; }

/// Dataset files live under MDMIXER_DATA (environment) or the repository data dir.
fs::path data_file(const std::string& name) {
  if (const char* env = std::getenv("MDMIXER_DATA")) return fs::path(env) / name;
  return fs::path(MDMIXER_DATA_DIR) / name;
}

struct SeedRun {
  double val_mse = 0.0;
  MetricRow test;
};

template <class Model>
SeedRun run_model(Model& model, const PreparedDataset& data, const RunConfig& cfg, std::uint64_t seed) {
  TrainHyper hyper = cfg.hyper;
  hyper.seed = seed;
  const TrainReport r = fit(model, data.train, data.val, hyper);
  return {r.best_val_mse(), evaluate(model, data.test, cfg.dataset_name, seed, cfg.eval_batch)};
}

SeedRun run_seed(const RunConfig& cfg, const PreparedDataset& data, std::uint64_t seed) {
  if (cfg.is_baseline()) {
    Baseline<float> model(cfg.baseline_config(), seed);
    return run_model(model, data, cfg, seed);
  }
  MDMixer<float> model(cfg.model_config, seed);
  return run_model(model, data, cfg, seed);
}

struct SeedMean {
  double val_mse = 0.0;
  double test_mse = 0.0;
  double test_mae = 0.0;
};

SeedMean run_seeds(const RunConfig& cfg, const PreparedDataset& data) {
  SeedMean m;
  for (const auto seed : cfg.seeds) {
    const SeedRun r = run_seed(cfg, data, seed);
    std::string label = cfg.model;
    if (!cfg.is_baseline() && !cfg.model_config.use_amwg) label += " without gate";
    if (!cfg.is_baseline() && !cfg.model_config.use_align_loss) label += " without alignment loss";
    std::cerr << fmt::format("  [{} {} seed {}] val mse {:.4f}, test mse {:.4f}, test mae {:.4f}\n", cfg.dataset_name,
                             label, seed, r.val_mse, r.test.mse, r.test.mae);
    m.val_mse += r.val_mse;
    m.test_mse += r.test.mse;
    m.test_mae += r.test.mae;
  }
  const double n = static_cast<double>(cfg.seeds.size());
  return {m.val_mse / n, m.test_mse / n, m.test_mae / n};
}

RunConfig ett_config(const std::string& file, const std::string& dataset) {
  RunConfig cfg = load_run_config(config_dir() / file);
  cfg.dataset = data_file(dataset).string();
  return cfg;
}

ModelConfig tiny() {
  ModelConfig c;
  c.lookback = 8;
  c.horizon = 4;
  c.channels = 2;
  c.patch_len = 4;
  c.stride = 2;
  c.embed_dim = 3;
  c.heads = 2;
  c.hidden = 4;
  c.kernel = 3;
  return c;
}

void criterion_gradients() {
  double worst = 0.0;
  std::string where;
  int runs = 0;
  for (int mask = 0; mask < 8; ++mask) {
    for (double alpha : {0.0, 0.05}) {
      ModelConfig c = tiny();
      c.use_mim = mask & 1;
      c.use_amwg = mask & 2;
      c.use_align_loss = mask & 4;
      c.align_weight = alpha;
      const GradcheckReport r = gradcheck(c, 7, 1e-5, 1e-4);
      ++runs;
      if (r.max_rel_err >= worst) {
        worst = r.max_rel_err;
        where = fmt::format("{} (mim={} amwg={} align={} alpha={})", r.worst_param, c.use_mim, c.use_amwg,
                            c.use_align_loss, alpha);
      }
    }
  }
  report("1 gradient correctness", worst < 1e-4,
         fmt::format("{} configurations, max relative error {:.2e} at {}, limit 1e-4", runs, worst, where));
}

void criterion_formulas() {
  std::mt19937_64 rng(2026);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto random_panel = [&](Index b, Index c, Index t) {
    Panel<double> p(b, c, t);
    for (Index i = 0; i < p.values.size(); ++i) p.values.data()[i] = 3.0 * normal(rng) + 1.0;
    return p;
  };
  std::vector<std::string> broken;

  double recon = 0.0;
  for (Index kernel : {1, 3, 5, 25}) {
    const Panel<double> x = random_panel(4, 3, 96);
    const auto d = decompose(x, kernel);
    recon = std::max(recon, (d.trend.values + d.seasonal.values - x.values).cwiseAbs().maxCoeff());
  }
  if (!(recon <= 1e-12)) broken.push_back(fmt::format("decomposition residual {:.1e}", recon));

  for (int trial = 0; trial < 50; ++trial) {
    const Index t = 1 + static_cast<Index>(rng() % 256);
    const Index p = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(t));
    const Index s = 1 + static_cast<Index>(rng() % 64);
    Index starts = 0;
    for (Index k = 0; k + p <= t; k += s) ++starts;
    const auto g = PatchGeometry::for_lookback(t, p, s);
    const auto ps = patch(random_panel(1, 1, t), p, s);
    if (g.count != starts + 1 || ps.patches.rows() != g.count) {
      broken.push_back(fmt::format("patch count for T={} P={} S={}", t, p, s));
    }
  }

  ModelConfig c = tiny();
  const auto params = init_params<double>(c, 3);
  const auto out = forward(random_panel(5, 2, 8), params, c);
  double simplex = 0.0;
  for (Index b = 0; b < 5; ++b)
    for (Index ch = 0; ch < 2; ++ch) simplex = std::max(simplex, std::abs(out.gate_weights(b, 0, ch) + out.gate_weights(b, 1, ch) - 1.0));
  if (!(simplex <= 1e-6)) broken.push_back(fmt::format("gate simplex error {:.1e}", simplex));

  const Matrix<double> src = random_panel(2, 1, 7).values;
  if (upsample(src, 7) != src) broken.push_back("upsample identity");
  const Matrix<double> up = upsample(src, 40);
  if (up(0, 0) != src(0, 0) || std::abs(up(1, 39) - src(1, 6)) > 1e-12) broken.push_back("upsample endpoints");

  const Matrix<double> a = random_panel(2, 2, 4).values;
  if ((fuse<double>({a, a}, out.gate_weights) - 2.0 * a).cwiseAbs().maxCoeff() > 1e-12) broken.push_back("equal-head fusion");

  ModelConfig no_alpha = c;
  no_alpha.align_weight = 0.0;
  const auto y = random_panel(5, 2, 4);
  const LossBreakdown l = total_loss(out, y, no_alpha);
  if (l.total != l.main) broken.push_back("alpha = 0 collapse");

  report("2 formula unit suite", broken.empty(),
         broken.empty() ? std::string("decomposition, patch count (50 geometries), gate simplex, upsampling, fusion, loss")
                        : fmt::format("broken: {}", fmt::join(broken, "; ")));
}

struct Reproduction {
  std::optional<PreparedDataset> data;
  RunConfig cfg;
  SeedMean full;
};

Reproduction criterion_reproduction(const std::string& id, const std::string& file, const std::string& dataset,
                                    double mse_ref, double mae_ref, double tol) {
  Reproduction r;
  r.cfg = ett_config(file, dataset);
  if (!fs::exists(r.cfg.dataset)) {
    report(id, false, fmt::format("{} not found; target MSE {} +- {}, MAE {} +- {} not measured", r.cfg.dataset,
                                  mse_ref, tol, mae_ref, tol));
    return r;
  }
  r.data = load_dataset(r.cfg, config_dir());
  r.full = run_seeds(r.cfg, *r.data);
  const bool pass = std::abs(r.full.test_mse - mse_ref) <= tol && std::abs(r.full.test_mae - mae_ref) <= tol;
  report(id, pass,
         fmt::format("{}/96 over {} seeds: MSE {:.4f} (target {} +- {}), MAE {:.4f} (target {} +- {})", r.cfg.dataset_name,
                     r.cfg.seeds.size(), r.full.test_mse, mse_ref, tol, r.full.test_mae, mae_ref, tol));
  return r;
}

void criterion_ablation(const Reproduction& etth1) {
  if (!etth1.data) {
    report("4 ablation direction", false, "ETTh1 not available");
    return;
  }
  RunConfig no_gate = etth1.cfg;
  no_gate.model_config.use_amwg = false;
  RunConfig no_align = etth1.cfg;
  no_align.model_config.use_align_loss = false;
  const SeedMean g = run_seeds(no_gate, *etth1.data);
  const SeedMean a = run_seeds(no_align, *etth1.data);
  const double full = etth1.full.val_mse;
  const bool pass = full <= 1.01 * g.val_mse && full <= 1.01 * a.val_mse;
  report("4 ablation direction", pass,
         fmt::format("ETTh1/96 seed-mean val MSE: full {:.4f}, without gate {:.4f}, without alignment loss {:.4f} "
                     "(full must be <= 1.01 x each)",
                     full, g.val_mse, a.val_mse));
}

void criterion_baselines(const Reproduction& ettm2) {
  if (!ettm2.data) {
    report("5 dual-branch baseline direction", false, "ETTm2 not available; direction not measured");
    return;
  }
  RunConfig decomp = ettm2.cfg;
  decomp.model = "decomp_linear";
  RunConfig dual = ettm2.cfg;
  dual.model = "dual_branch";
  const SeedMean d = run_seeds(decomp, *ettm2.data);
  const SeedMean b = run_seeds(dual, *ettm2.data);
  report("5 dual-branch baseline direction", b.test_mse <= d.test_mse,
         fmt::format("ETTm2/96 seed-mean test MSE: dual_branch {:.4f}, decomp_linear {:.4f}", b.test_mse, d.test_mse));
}

void criterion_interpretability() {
  RunConfig cfg = load_run_config(config_dir() / "synth_two_scale.cfg");
  const std::vector<SynthChannel> channels{{192.0, 1.0, 0.0, 0.05}, {8.0, 1.0, 0.0, 0.05}};
  const SeriesFrame frame = synth_multiscale(4000, channels, 17);
  cfg.resolve_channels(frame.channels());
  cfg.validate();
  const PreparedDataset data = prepare_dataset(frame, SplitSpec{cfg.split.ratios, cfg.model_config.lookback,
                                                                cfg.model_config.horizon});
  const Index half = cfg.model_config.heads / 2;
  double slow = 0.0;
  double fast = 0.0;
  for (const auto seed : cfg.seeds) {
    MDMixer<float> model(cfg.model_config, seed);
    TrainHyper hyper = cfg.hyper;
    hyper.seed = seed;
    fit(model, data.train, data.val, hyper);
    const Matrix<double> heat = export_amwg(model.params(), cfg.model_config, data.test);
    const double s = heat.col(0).head(half).sum();
    const double f = heat.col(1).head(half).sum();
    std::cerr << fmt::format("  [synthetic seed {}] coarse-half mass slow {:.4f}, fast {:.4f}\n", seed, s, f);
    slow += s;
    fast += f;
  }
  slow /= static_cast<double>(cfg.seeds.size());
  fast /= static_cast<double>(cfg.seeds.size());
  report("6 gate interpretability", slow > fast,
         fmt::format("seed-mean coarse-half gate mass: slow channel {:.4f}, fast channel {:.4f}", slow, fast));
}

}  // namespace

int main() {
  const std::vector<std::string> only = [] {
    std::vector<std::string> ids;
    if (const char* env = std::getenv("MDMIXER_ACCEPTANCE_ONLY")) {
      for (char ch : std::string(env))
        if (ch >= '1' && ch <= '6') ids.emplace_back(1, ch);
    }
    return ids;
  }();
  const auto wanted = [&](const char* id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  if (wanted("1")) criterion_gradients();
  if (wanted("2")) criterion_formulas();
  Reproduction etth1;
  Reproduction ettm2;
  if (wanted("3") || wanted("4")) etth1 = criterion_reproduction("3a ETTh1 reproduction", "etth1_96.cfg", "ETTh1.csv", 0.379, 0.386, 0.04);
  if (wanted("3") || wanted("5")) ettm2 = criterion_reproduction("3b ETTm2 reproduction", "ettm2_96.cfg", "ETTm2.csv", 0.171, 0.248, 0.03);
  if (wanted("4")) criterion_ablation(etth1);
  if (wanted("5")) criterion_baselines(ettm2);
  if (wanted("6")) criterion_interpretability();
  std::cout << fmt::format("{} criteria failed", failures) << std::endl;
  return failures;
}
