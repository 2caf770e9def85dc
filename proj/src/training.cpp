// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/training.hpp"

#include <fstream>

namespace mdmixer {

namespace {

template <class T>
Matrix<T> sign_of(const Matrix<T>& residual) {
  return residual.unaryExpr([](T v) { return static_cast<T>((v > T(0)) - (v < T(0))); });
}

template <class T>
void scale_rows(Matrix<T>& m, const Vector<T>& scale) {
  for (Index r = 0; r < m.rows(); ++r) m.row(r) *= scale(r);
}

template <class T>
Matrix<T> column_sums(const Matrix<T>& m) {
  return m.colwise().sum();
}

}  // namespace

template <class T>
double main_loss(const Panel<T>& prediction, const Panel<T>& target) {
  require_same_shape(prediction.values, target.values, "main_loss");
  return (prediction.values.template cast<double>() - target.values.template cast<double>()).array().abs().mean();
}

template <class T>
Matrix<T> pooling_matrix(Index from, Index to) {
  if (to < 1 || to > from) throw ShapeError("pooling: need 1 <= target length <= source length");
  Matrix<T> pool = Matrix<T>::Zero(from, to);
  for (Index k = 0; k < to; ++k) {
    const Index begin = (k * from) / to;
    const Index end = ((k + 1) * from + to - 1) / to;
    for (Index i = begin; i < end; ++i) pool(i, k) = T(1) / static_cast<T>(end - begin);
  }
  return pool;
}

template <class T>
std::vector<Panel<T>> alignment_targets(const Panel<T>& target, std::span<const Index> schedule) {
  std::vector<Panel<T>> out;
  for (Index g : schedule) {
    if (g == target.length()) {
      out.push_back(target);
    } else {
      out.emplace_back(target.batch, target.channels, Matrix<T>(target.values * pooling_matrix<T>(target.length(), g)));
    }
  }
  return out;
}

template <class T>
LossBreakdown total_loss(const ForecastOutput<T>& output, const Panel<T>& target, const ModelConfig& cfg) {
  LossBreakdown loss;
  loss.main = main_loss(output.final, target);
  std::vector<Index> schedule;
  for (const auto& y : output.per_granularity) schedule.push_back(y.length());
  const auto targets = alignment_targets(target, schedule);
  double align_sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    loss.align_per_head.push_back(main_loss(output.per_granularity[i], targets[i]));
    align_sum += loss.align_per_head.back();
  }
  loss.total = loss.main;
  if (cfg.use_align_loss && !targets.empty()) {
    loss.total += cfg.align_weight * align_sum / static_cast<double>(targets.size());
  }
  return loss;
}

template <class T>
GradientResult<T> backward(const Panel<T>& x, const Panel<T>& target, const ParamSet<T>& params,
                           const ModelConfig& cfg) {
  ForwardTrace<T> tr;
  const ForecastOutput<T> out = forward(x, params, cfg, &tr);
  if (!out.final.values.allFinite()) throw DivergenceError("non-finite forecast (stage: forward)");
  require_same_shape(out.final.values, target.values, "backward/target");

  GradientResult<T> result{params.zeros_like(), total_loss(out, target, cfg)};
  if (!std::isfinite(result.loss.total)) throw DivergenceError("non-finite loss (stage: total_loss)");
  ParamSet<T>& grads = result.grads;

  const auto schedule = granularity_schedule(cfg);
  const auto heads = static_cast<Index>(schedule.size());
  const Index series = x.rows();
  const Index channels = x.channels;
  const Index batch = x.batch;
  const Index count = tr.patches_s.geometry.count;
  const Index flat_width = count * cfg.embed_dim;
  const Vector<T>& std_dev = out.stats.std;

  // Final forecast: d|y - y*| / n, then through the instance denormalization.
  Matrix<T> d_fused = sign_of<T>(out.final.values - target.values) / static_cast<T>(out.final.values.size());
  scale_rows(d_fused, std_dev);

  std::vector<Matrix<T>> d_combined(static_cast<std::size_t>(heads));
  for (Index i = 0; i < heads; ++i) d_combined[i] = Matrix<T>::Zero(series, schedule[i]);
  if (cfg.use_align_loss) {
    const auto targets = alignment_targets(target, schedule);
    const T weight = static_cast<T>(cfg.align_weight) / static_cast<T>(heads);
    for (Index i = 0; i < heads; ++i) {
      const auto& pred = out.per_granularity[i].values;
      d_combined[i] = sign_of<T>(pred - targets[i].values) * (weight / static_cast<T>(pred.size()));
      scale_rows(d_combined[i], std_dev);
    }
  }

  // Fusion and gate.
  std::vector<Matrix<T>> d_up(static_cast<std::size_t>(heads));
  Vector<T> d_pooled_s, d_pooled_t;
  if (cfg.gating_enabled()) {
    const auto& w = out.gate_weights;
    const T mean_weight = T(1) / static_cast<T>(heads);
    Matrix<T> d_weights(batch, heads * channels);
    for (Index h = 0; h < heads; ++h) {
      d_up[h] = d_fused;
      for (Index r = 0; r < series; ++r) {
        const Index b = r / channels, c = r % channels;
        d_up[h].row(r) *= w(b, h, c) + mean_weight;
        d_weights(b, h * channels + c) = d_fused.row(r).dot(out.upsampled[h].row(r));
      }
    }
    Matrix<T> d_logits(batch, heads * channels);
    for (Index b = 0; b < batch; ++b) {
      for (Index c = 0; c < channels; ++c) {
        T inner = 0;
        for (Index h = 0; h < heads; ++h) inner += w(b, h, c) * d_weights(b, h * channels + c);
        for (Index h = 0; h < heads; ++h) {
          d_logits(b, h * channels + c) = w(b, h, c) * (d_weights(b, h * channels + c) - inner);
        }
      }
    }
    grads.gate2.weight = tr.gate_hidden.transpose() * d_logits;
    grads.gate2.bias = column_sums(d_logits);
    Matrix<T> d_hidden = (d_logits * params.gate2.weight.transpose()).cwiseProduct(
        tr.gate_hidden.unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
    grads.gate1.weight = tr.gate_input.transpose() * d_hidden;
    grads.gate1.bias = column_sums(d_hidden);
    const Matrix<T> d_input = d_hidden * params.gate1.weight.transpose();
    d_pooled_s.resize(series);
    d_pooled_t.resize(series);
    for (Index r = 0; r < series; ++r) {
      d_pooled_s(r) = d_input(r / channels, r % channels);
      d_pooled_t(r) = d_input(r / channels, channels + r % channels);
    }
  } else {
    for (Index h = 0; h < heads; ++h) d_up[h] = d_fused / static_cast<T>(heads);
  }

  for (Index i = 0; i < heads; ++i) {
    if (schedule[i] == cfg.horizon) {
      d_combined[i] += d_up[i];
    } else {
      d_combined[i] += d_up[i] * interpolation_matrix<T>(schedule[i], cfg.horizon).transpose();
    }
  }

  // Y_i = Y^s_i + Y^t_i, then the coarse-to-fine mixers in reverse.
  std::vector<Matrix<T>> d_s = d_combined;
  std::vector<Matrix<T>> d_t = std::move(d_combined);
  if (cfg.mixing_enabled()) {
    for (Index i = heads - 1; i >= 1; --i) {
      auto& ms = grads.mixers_s[i - 1];
      ms.weight = tr.mixed_s[i - 1].transpose() * d_s[i];
      ms.bias = column_sums(d_s[i]);
      d_s[i - 1] += d_s[i] * params.mixers_s[i - 1].weight.transpose();
      auto& mt = grads.mixers_t[i - 1];
      mt.weight = tr.mixed_t[i - 1].transpose() * d_t[i];
      mt.bias = column_sums(d_t[i]);
      d_t[i - 1] += d_t[i] * params.mixers_t[i - 1].weight.transpose();
    }
  }

  // Prediction heads.
  const Matrix<T> flat_s = Eigen::Map<const Matrix<T>>(tr.embedded_s.data(), series, flat_width);
  const Matrix<T> flat_t = Eigen::Map<const Matrix<T>>(tr.embedded_t.data(), series, flat_width);
  Matrix<T> d_flat_s = Matrix<T>::Zero(series, flat_width);
  Matrix<T> d_flat_t = Matrix<T>::Zero(series, flat_width);
  for (Index i = 0; i < heads; ++i) {
    grads.season_heads[i].weight.noalias() = flat_s.transpose() * d_s[i];
    grads.season_heads[i].bias = column_sums(d_s[i]);
    d_flat_s.noalias() += d_s[i] * params.season_heads[i].weight.transpose();

    const Matrix<T>& hidden = tr.trend_hidden[i];
    grads.trend_fc2[i].weight.noalias() = hidden.transpose() * d_t[i];
    grads.trend_fc2[i].bias = column_sums(d_t[i]);
    Matrix<T> d_hidden = (d_t[i] * params.trend_fc2[i].weight.transpose())
                             .cwiseProduct(hidden.unaryExpr([](T v) { return v > T(0) ? T(1) : T(0); }));
    grads.trend_fc1[i].weight.noalias() = flat_t.transpose() * d_hidden;
    grads.trend_fc1[i].bias = column_sums(d_hidden);
    d_flat_t.noalias() += d_hidden * params.trend_fc1[i].weight.transpose();
  }
  if (cfg.gating_enabled()) {
    const T inv = T(1) / static_cast<T>(flat_width);
    for (Index r = 0; r < series; ++r) {
      d_flat_s.row(r).array() += d_pooled_s(r) * inv;
      d_flat_t.row(r).array() += d_pooled_t(r) * inv;
    }
  }

  // Patch embeddings and positional encodings.
  const auto embed_backward = [&](const Matrix<T>& d_flat, const PatchSet<T>& patches, Linear<T>& g_layer,
                                  Matrix<T>& g_pos) {
    const Eigen::Map<const Matrix<T>> d_embedded(d_flat.data(), series * count, cfg.embed_dim);
    g_layer.weight.noalias() = patches.patches.transpose() * d_embedded;
    g_layer.bias = d_embedded.colwise().sum();
    for (Index s = 0; s < series; ++s) {
      const Index offset = cfg.pos_encoding == PosEncoding::shared ? 0 : (s % channels) * count;
      g_pos.middleRows(offset, count) += d_embedded.middleRows(s * count, count);
    }
  };
  embed_backward(d_flat_s, tr.patches_s, grads.embed_s, grads.pos_s);
  embed_backward(d_flat_t, tr.patches_t, grads.embed_t, grads.pos_t);
  return result;
}

double TrainReport::best_val_mse() const {
  for (const auto& e : epochs) {
    if (e.epoch == best_epoch) return e.val_mse;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "epoch,train_loss,val_mse,val_mae\n";
  for (const auto& e : epochs) out << fmt::format("{},{},{},{}\n", e.epoch, e.train_loss, e.val_mse, e.val_mae);
}

std::string TrainReport::summary_text() const {
  std::string text = fmt::format("seed {}\nepochs {}\nbest_epoch {}\nbest_val_mse {}\n", seed, epochs.size(),
                                 best_epoch, best_val_mse());
  if (!config_echo.empty()) text += "\n# resolved configuration\n" + config_echo;
  return text;
}

TrainResult<float> train(const ModelConfig& cfg, const PreparedDataset& data, const TrainHyper& hyper) {
  MDMixer<float> model(cfg, hyper.seed);
  TrainReport report = fit(model, data.train, data.val, hyper);
  return {std::move(model.params()), std::move(report)};
}

GradcheckReport gradcheck(const ModelConfig& cfg, std::uint64_t seed, double h, double tol, Index batch) {
  cfg.validate();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Panel<double> x(batch, cfg.channels, cfg.lookback);
  Panel<double> y(batch, cfg.channels, cfg.horizon);
  for (Index i = 0; i < x.values.size(); ++i) x.values.data()[i] = normal(rng);
  for (Index i = 0; i < y.values.size(); ++i) y.values.data()[i] = normal(rng);

  ParamSet<double> params = init_params<double>(cfg, seed);
  // Nonzero biases so every bias path carries signal.
  params.for_each([&](std::string_view name, Matrix<double>& m) {
    if (name.ends_with(".bias")) {
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = 0.1 * normal(rng);
    }
  });
  const auto analytic = backward(x, y, params, cfg).grads;
  const auto loss_at = [&](const ParamSet<double>& p) { return total_loss(forward(x, p, cfg), y, cfg).total; };

  std::vector<const Matrix<double>*> grad_tensors;
  analytic.for_each([&](std::string_view, const Matrix<double>& m) { grad_tensors.push_back(&m); });

  GradcheckReport report;
  std::size_t k = 0;
  ParamSet<double> probe = params;
  probe.for_each([&](std::string_view name, Matrix<double>& m) {
    const Matrix<double>& g = *grad_tensors[k++];
    for (Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + h;
      const double up = loss_at(probe);
      m.data()[i] = saved - h;
      const double down = loss_at(probe);
      m.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = g.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.checked;
      if (report.worst_param.empty() || rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = std::string(name);
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  });
  report.passed = report.max_rel_err < tol;
  return report;
}

#define MDMIXER_INSTANTIATE(T)                                                                         \
  template double main_loss(const Panel<T>&, const Panel<T>&);                                          \
  template Matrix<T> pooling_matrix<T>(Index, Index);                                                   \
  template std::vector<Panel<T>> alignment_targets(const Panel<T>&, std::span<const Index>);            \
  template LossBreakdown total_loss(const ForecastOutput<T>&, const Panel<T>&, const ModelConfig&);     \
  template GradientResult<T> backward(const Panel<T>&, const Panel<T>&, const ParamSet<T>&, const ModelConfig&);

MDMIXER_INSTANTIATE(float)
MDMIXER_INSTANTIATE(double)

#undef MDMIXER_INSTANTIATE

}  // namespace mdmixer
