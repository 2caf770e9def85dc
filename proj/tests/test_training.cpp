// Copyright 2026 The mdmixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mdmixer/baselines.hpp"
#include "mdmixer/training.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mdmixer;

namespace {

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

Panel<double> row(std::initializer_list<double> values) {
  Panel<double> p(1, 1, static_cast<Index>(values.size()));
  Index t = 0;
  for (double v : values) p(0, 0, t++) = v;
  return p;
}

Panel<double> random_panel(Index b, Index c, Index t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Panel<double> p(b, c, t);
  for (Index i = 0; i < p.values.size(); ++i) p.values.data()[i] = n(rng);
  return p;
}

PreparedDataset synthetic(Index n, std::vector<SynthChannel> channels, Index lookback, Index horizon,
                          std::uint64_t seed = 1) {
  const SeriesFrame frame = synth_multiscale(n, channels, seed);
  return prepare_dataset(frame, SplitSpec{{0.6, 0.2, 0.2}, lookback, horizon});
}

/// A single-tensor parameter container.
struct One {
  Matrix<double> w;
  template <class F>
  void for_each(F&& f) {
    f(std::string_view("w"), w);
  }
  template <class F>
  void for_each(F&& f) const {
    f(std::string_view("w"), w);
  }
};

}  // namespace

TEST_CASE("main loss is the mean absolute error") {
  CHECK(main_loss(row({1, 2}), row({2, 4})) == doctest::Approx(1.5));
  CHECK(main_loss(row({1, 2}), row({1, 2})) == 0.0);
  const Panel<double> a = random_panel(2, 3, 5, 1);
  const Panel<double> b = random_panel(2, 3, 5, 2);
  Panel<double> a3 = a;
  Panel<double> b3 = b;
  a3.values *= -3.0;
  b3.values *= -3.0;
  CHECK(main_loss(a3, b3) == doctest::Approx(3.0 * main_loss(a, b)));
  CHECK_THROWS_AS(main_loss(a, random_panel(2, 3, 4, 1)), ShapeError);
}

TEST_CASE("adaptive pooling matrix") {
  const Matrix<double> x{{1.0, 2.0, 3.0, 4.0}};
  const Matrix<double> two = x * pooling_matrix<double>(4, 2);
  CHECK(two(0, 0) == doctest::Approx(1.5));
  CHECK(two(0, 1) == doctest::Approx(3.5));
  const Matrix<double> three = x * pooling_matrix<double>(4, 3);
  CHECK(three(0, 0) == doctest::Approx(1.5));
  CHECK(three(0, 1) == doctest::Approx(2.5));
  CHECK(three(0, 2) == doctest::Approx(3.5));
  CHECK(pooling_matrix<double>(6, 6) == Matrix<double>::Identity(6, 6));

  // Independent bin enumeration for arbitrary sizes.
  for (Index f : {5, 7, 12, 96}) {
    for (Index g = 1; g <= f; g += 3) {
      const Matrix<double> pm = pooling_matrix<double>(f, g);
      for (Index k = 0; k < g; ++k) {
        const Index lo = (k * f) / g;
        const Index hi = ((k + 1) * f + g - 1) / g;
        for (Index s = 0; s < f; ++s) {
          const double expect = (s >= lo && s < hi) ? 1.0 / static_cast<double>(hi - lo) : 0.0;
          CHECK(pm(s, k) == doctest::Approx(expect));
        }
      }
    }
  }
}

TEST_CASE("total loss composition") {
  ModelConfig c = tiny();
  const auto p = init_params<double>(c, 3);
  const Panel<double> x = random_panel(2, 2, 8, 4);
  const Panel<double> y = random_panel(2, 2, 4, 5);
  const auto out = forward(x, p, c);

  c.align_weight = 0.0;
  const LossBreakdown zero = total_loss(out, y, c);
  CHECK(zero.total == zero.main);
  CHECK(zero.align_per_head.size() == 2);

  c.align_weight = 0.05;
  const LossBreakdown l = total_loss(out, y, c);
  const auto schedule = granularity_schedule(c);
  const auto targets = alignment_targets(y, std::span<const Index>(schedule));
  double align = 0.0;
  for (std::size_t i = 0; i < 2; ++i) align += main_loss(out.per_granularity[i], targets[i]);
  CHECK(l.main == doctest::Approx(main_loss(out.final, y)));
  CHECK(l.total == doctest::Approx(l.main + 0.05 * align / 2.0));

  c.use_align_loss = false;
  CHECK(total_loss(out, y, c).total == l.main);
}

TEST_CASE("total loss of perfect and doubled predictions") {
  ModelConfig c = tiny();
  c.heads = 1;
  c.align_weight = 1.0;
  ForecastOutput<double> out;
  out.final = random_panel(2, 2, 4, 1);
  out.per_granularity = {out.final};
  CHECK(total_loss(out, out.final, c).total == 0.0);

  const Panel<double> target = random_panel(2, 2, 4, 2);
  const LossBreakdown l = total_loss(out, target, c);
  CHECK(l.total == doctest::Approx(2.0 * l.main));
}

TEST_CASE("adamw hand updates") {
  One theta{Matrix<double>::Ones(1, 1)};
  AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.0});
  opt.step(theta, One{Matrix<double>::Ones(1, 1)});
  CHECK(theta.w(0, 0) == doctest::Approx(0.9).epsilon(1e-6));

  One still{Matrix<double>::Ones(1, 1)};
  AdamW<double> fresh({0.1, 0.9, 0.999, 1e-8, 0.0});
  fresh.step(still, One{Matrix<double>::Zero(1, 1)});
  CHECK(still.w(0, 0) == 1.0);

  One decayed{Matrix<double>::Ones(1, 1)};
  AdamW<double> wd({0.1, 0.9, 0.999, 1e-8, 0.01});
  wd.step(decayed, One{Matrix<double>::Zero(1, 1)});
  CHECK(decayed.w(0, 0) == doctest::Approx(0.999).epsilon(1e-12));

  auto params = init_params<double>(tiny(), 1);
  const auto before = params;
  AdamW<double> frozen({0.0, 0.9, 0.999, 1e-8, 0.0});
  const auto grads = backward(random_panel(2, 2, 8, 1), random_panel(2, 2, 4, 2), params, tiny()).grads;
  frozen.step(params, grads);
  bool identical = true;
  std::vector<const Matrix<double>*> a;
  before.for_each([&](std::string_view, const Matrix<double>& m) { a.push_back(&m); });
  std::size_t k = 0;
  params.for_each([&](std::string_view, const Matrix<double>& m) { identical = identical && m == *a[k++]; });
  CHECK(identical);
}

TEST_CASE("gradcheck on the tiny model across ablations") {
  for (int mask = 0; mask < 8; ++mask) {
    for (double alpha : {0.0, 0.05}) {
      ModelConfig c = tiny();
      c.use_mim = mask & 1;
      c.use_amwg = mask & 2;
      c.use_align_loss = mask & 4;
      c.align_weight = alpha;
      const GradcheckReport r = gradcheck(c, 7, 1e-5, 1e-4);
      INFO("mask " << mask << " alpha " << alpha << " worst " << r.worst_param << "[" << r.worst_index << "]");
      CHECK(r.max_rel_err < 1e-4);
      CHECK(r.passed);
      CHECK(r.checked == init_params<double>(c, 7).scalar_count());
    }
  }
}

TEST_CASE("gradcheck for other structural settings") {
  ModelConfig single = tiny();
  single.use_mpp = false;
  CHECK(gradcheck(single, 3, 1e-5, 1e-4).passed);

  ModelConfig per_channel = tiny();
  per_channel.pos_encoding = PosEncoding::per_channel;
  CHECK(gradcheck(per_channel, 4, 1e-5, 1e-4).passed);

  ModelConfig wide = tiny();
  wide.heads = 4;
  wide.horizon = 8;
  wide.lookback = 12;
  wide.channels = 3;
  CHECK(gradcheck(wide, 5, 1e-5, 1e-4, 3).passed);
}

TEST_CASE("unused parameters receive zero gradient") {
  ModelConfig c = tiny();
  c.use_mim = false;
  const auto p = init_params<double>(c, 2);
  const auto g = backward(random_panel(2, 2, 8, 1), random_panel(2, 2, 4, 2), p, c).grads;
  for (const auto& m : g.mixers_s) CHECK(m.weight.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& m : g.mixers_t) CHECK(m.bias.cwiseAbs().maxCoeff() == 0.0);

  c.use_mim = true;
  c.use_amwg = false;
  const auto h = backward(random_panel(2, 2, 8, 1), random_panel(2, 2, 4, 2), p, c).grads;
  CHECK(h.gate1.weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(h.gate2.bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero residual gives zero gradient") {
  ModelConfig c = tiny();
  c.use_align_loss = false;
  const auto p = init_params<double>(c, 2);
  const Panel<double> x = random_panel(2, 2, 8, 1);
  const Panel<double> y = forward(x, p, c).final;
  const auto g = backward(x, y, p, c);
  CHECK(g.loss.total == 0.0);
  double largest = 0.0;
  g.grads.for_each([&](std::string_view, const Matrix<double>& m) { largest = std::max(largest, m.cwiseAbs().maxCoeff()); });
  CHECK(largest == 0.0);
}

TEST_CASE("repeated batch loss decreases") {
  const ModelConfig c = tiny();
  MDMixer<double> model(c, 9);
  const Panel<double> x = random_panel(4, 2, 8, 3);
  const Panel<double> y = random_panel(4, 2, 4, 4);
  ParamSet<double> grads;
  AdamW<double> opt({1e-4, 0.9, 0.999, 1e-8, 0.0});
  const double before = model.loss_and_gradient(x, y, grads).total;
  for (int step = 0; step < 10; ++step) {
    model.loss_and_gradient(x, y, grads);
    opt.step(model.params(), grads);
  }
  const double after = model.loss_and_gradient(x, y, grads).total;
  CHECK(before - after > 0.0);
}

TEST_CASE("fit loop contract") {
  ModelConfig c = tiny();
  c.channels = 2;
  const PreparedDataset d = synthetic(200, {{8.0, 1.0, 0.0, 0.1}, {16.0, 0.5, 0.01, 0.1}}, 8, 4);

  TrainHyper once;
  once.max_epochs = 1;
  once.patience = 0;
  MDMixer<float> m1(c, 1);
  CHECK(fit(m1, d.train, d.val, once).epochs.size() == 1);

  TrainHyper many;
  many.max_epochs = 6;
  many.patience = 0;
  many.lr = 1e-2;
  MDMixer<float> m2(c, 1);
  const TrainReport r = fit(m2, d.train, d.val, many);
  REQUIRE(r.epochs.size() == 6);
  for (std::size_t i = 0; i < r.epochs.size(); ++i) CHECK(r.epochs[i].epoch == static_cast<int>(i + 1));
  CHECK(r.best_val_mse() == doctest::Approx(window_metrics(m2, d.val).mse));

  TrainHyper patient = many;
  patient.max_epochs = 50;
  patient.patience = 2;
  patient.lr = 0.5;  // noisy enough to stall quickly
  MDMixer<float> m3(c, 1);
  const TrainReport p = fit(m3, d.train, d.val, patient);
  CHECK(static_cast<int>(p.epochs.size()) <= p.best_epoch + 2);
}

TEST_CASE("fit is deterministic for a fixed seed") {
  const ModelConfig c = tiny();
  const PreparedDataset d = synthetic(160, {{8.0, 1.0, 0.0, 0.2}, {12.0, 1.0, 0.0, 0.2}}, 8, 4);
  TrainHyper h;
  h.max_epochs = 3;
  h.seed = 42;
  MDMixer<float> a(c, 42);
  MDMixer<float> b(c, 42);
  const TrainReport ra = fit(a, d.train, d.val, h);
  const TrainReport rb = fit(b, d.train, d.val, h);
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    CHECK(ra.epochs[i].train_loss == rb.epochs[i].train_loss);
    CHECK(ra.epochs[i].val_mse == rb.epochs[i].val_mse);
  }
  CHECK(ra.summary_text() == rb.summary_text());
}

TEST_CASE("divergence is reported") {
  ModelConfig c = tiny();
  MDMixer<float> model(c, 1);
  model.params().season_heads[0].bias.setConstant(std::numeric_limits<float>::quiet_NaN());
  const PreparedDataset d = synthetic(120, {{8.0, 1.0, 0.0, 0.1}, {8.0, 1.0, 0.0, 0.1}}, 8, 4);
  try {
    fit(model, d.train, d.val, TrainHyper{});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    INFO(std::string(e.what()));
    CHECK(std::string(e.what()).find("epoch 1, batch 1") != std::string::npos);
  }
}

TEST_CASE("noiseless sinusoid is learned") {
  const PreparedDataset d = synthetic(1200, {{16.0, 1.0, 0.0, 0.0}}, 96, 96);
  TrainHyper h;
  h.max_epochs = 20;
  h.patience = 0;
  h.seed = 1;

  BaselineConfig bc{BaselineKind::linear_direct, 96, 96, 1};
  Baseline<float> linear(bc, 1);
  const TrainReport lr = fit(linear, d.train, d.val, h);
  CHECK(lr.best_val_mse() < 0.05);

  ModelConfig c;
  c.channels = 1;
  MDMixer<float> model(c, 1);
  const TrainReport mr = fit(model, d.train, d.val, h);
  CHECK(mr.best_val_mse() < 0.05);
}
