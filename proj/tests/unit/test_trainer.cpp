// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "layergen/errors.hpp"
#include "layergen/textio.hpp"
#include "layergen/trainer.hpp"

using namespace layergen;
namespace fs = std::filesystem;

namespace {

MLP tiny_net(std::uint64_t seed) {
  Rng rng = substream(seed, 0);
  return glorot_init({2, 4, 1}, rng);
}

TrainConfig fast_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.n_interior = 32;
  cfg.n_per_edge = 8;
  cfg.test_scale = 2;
  cfg.resample_every = 10;
  cfg.eval_every = 10;
  cfg.patience = 2;
  cfg.max_epochs = 300;
  cfg.adam.alpha = 1e-2;
  cfg.seed = seed;
  return cfg;
}

} // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("adam: zero gradient never moves parameters") {
  MLP net = tiny_net(1);
  const MLP before = net;
  AdamState st = AdamState::zeros_like(net);
  const ParamGradient zero = ParamGradient::zeros_like(net);
  for (long t = 1; t <= 5; ++t) adam_step(net, zero, st, t, AdamParams{});
  CHECK(net.equals(before));
}

TEST_CASE("adam: constant gradient moves each entry by ~alpha per step") {
  // with a constant gradient g, m-hat = g and v-hat = g^2, so the update is
  // alpha * g / (|g| + eps) = alpha * sign(g) almost exactly
  MLP net = tiny_net(2);
  AdamState st = AdamState::zeros_like(net);
  ParamGradient g = ParamGradient::zeros_like(net);
  g.weights[0].setConstant(3.7);
  const double w0 = net.weights[0](0, 0);
  const double b0 = net.biases[0][0];
  AdamParams hp;
  hp.alpha = 1e-3;
  for (long t = 1; t <= 100; ++t) adam_step(net, g, st, t, hp);
  CHECK(net.weights[0](0, 0) == doctest::Approx(w0 - 100 * hp.alpha).epsilon(1e-6));
  CHECK(net.biases[0][0] == b0); // untouched: its gradient is zero
}

TEST_CASE("adam: frozen layers keep parameters and moments untouched") {
  MLP net = tiny_net(3);
  const MLP before = net;
  AdamState st = AdamState::zeros_like(net);
  ParamGradient g = ParamGradient::zeros_like(net);
  g.weights[0].setConstant(1.0);
  g.weights[1].setConstant(1.0);
  g.biases[0].setConstant(0.5);
  const std::vector<bool> frozen = {true, false};
  for (long t = 1; t <= 10; ++t) adam_step(net, g, st, t, AdamParams{}, &frozen);

  CHECK(net.weights[0] == before.weights[0]); // frozen: bitwise identical
  CHECK(net.biases[0] == before.biases[0]);
  CHECK(st.m_w[0].isZero(0.0));
  CHECK(st.v_w[0].isZero(0.0));
  CHECK(net.weights[1](0, 0) != before.weights[1](0, 0));
}

TEST_CASE("adam: shape and finiteness guards") {
  MLP net = tiny_net(4);
  AdamState st = AdamState::zeros_like(net);
  ParamGradient g = ParamGradient::zeros_like(net);
  g.weights[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(adam_step(net, g, st, 1, AdamParams{}), NumericalError);

  ParamGradient wrong = ParamGradient::zeros_like(tiny_net(5));
  wrong.weights[0].resize(9, 9);
  CHECK_THROWS_AS(adam_step(net, wrong, st, 1, AdamParams{}), ShapeError);

  const std::vector<bool> short_mask = {true};
  ParamGradient ok = ParamGradient::zeros_like(net);
  CHECK_THROWS_AS(adam_step(net, ok, st, 1, AdamParams{}, &short_mask), ShapeError);
}

TEST_CASE("derive_seed: no collisions over a realistic experiment grid") {
  std::set<std::uint64_t> seen;
  long n = 0;
  for (long x = 0; x <= 6; ++x)
    for (long r = 0; r < 4; ++r)
      for (int layers : {2, 3, 4, 5})
        for (int width : {8, 16, 20, 24, 48, 96, 192}) {
          seen.insert(derive_seed(x, r, layers, width, 0));
          ++n;
        }
  CHECK(static_cast<long>(seen.size()) == n);
  // the salt changes everything
  CHECK(derive_seed(0, 0, 4, 16, 0) != derive_seed(0, 0, 4, 16, 1));
  // deterministic
  CHECK(derive_seed(3, 1, 4, 16, 42) == derive_seed(3, 1, 4, 16, 42));
}

TEST_CASE("training: converges on the easy task and returns the best eval") {
  BVPSpec spec;
  TrainConfig cfg = fast_config(11);
  // The 32-point resampled batches make eval noise large; a gentler step and
  // longer patience keep the noise from cutting the run off early.
  cfg.patience = 8;
  cfg.adam.alpha = 5e-3;
  cfg.max_epochs = 600;
  const TrainResult r = train(spec, {6, 6}, cfg);
  const TrainRecord& rec = r.record;
  rec.validate();
  CHECK(rec.test_losses.size() >= 1);
  CHECK(rec.best_eval >= 0);
  CHECK(rec.final_test_loss == rec.test_losses[rec.best_eval]);
  // best eval is the minimum of the history
  for (double v : rec.test_losses) CHECK(rec.final_test_loss <= v);
  CHECK(rec.epochs <= 600);
  CHECK_FALSE(rec.aborted_non_finite);
  r.net.validate();
  // loss should have dropped well below the initial ~1 scale
  CHECK(rec.final_test_loss < 1.0);
}

TEST_CASE("training is bitwise deterministic in the seed") {
  BVPSpec spec;
  spec.x_source = 0.3;
  const TrainResult a = train(spec, {5}, fast_config(21));
  const TrainResult b = train(spec, {5}, fast_config(21));
  CHECK(a.net.equals(b.net));
  CHECK(a.record.test_losses == b.record.test_losses);
  CHECK(a.record.epochs == b.record.epochs);

  const TrainResult c = train(spec, {5}, fast_config(22));
  CHECK_FALSE(a.net.equals(c.net));
}

TEST_CASE("training stops after `patience` non-improving evaluations") {
  struct Counter : TrainObserver {
    long evals = 0;
    long resamples = 0;
    void on_resample(long) override { ++resamples; }
    void on_eval(long, double, double) override { ++evals; }
  } obs;
  BVPSpec spec;
  TrainConfig cfg = fast_config(31);
  cfg.max_epochs = 10000;
  cfg.adam.alpha = 1e-300; // effectively frozen: nothing improves after eval 1
  const TrainResult r = train(spec, {4}, cfg, &obs);
  // first eval sets the best; the next `patience` evals are non-improving
  CHECK(obs.evals == 1 + cfg.patience);
  CHECK(r.record.epochs == (1 + cfg.patience) * cfg.eval_every);
  CHECK(obs.resamples == r.record.epochs / cfg.resample_every);
}

TEST_CASE("training with a diverging step aborts with a record") {
  BVPSpec spec;
  TrainConfig cfg = fast_config(41);
  cfg.adam.alpha = 1e150; // guaranteed overflow in a few steps
  cfg.eval_every = 10;
  cfg.resample_every = 10;
  cfg.max_epochs = 1000;
  // the first eval happens at epoch 9; blow-up follows
  try {
    const TrainResult r = train(spec, {4}, cfg);
    CHECK(r.record.aborted_non_finite);
    CHECK(r.record.test_losses.size() >= 1);
  } catch (const NumericalError&) {
    // also acceptable: the abort happened before any evaluation completed
    CHECK(true);
  }
}

TEST_CASE("init_net and frozen-layer training") {
  BVPSpec spec;
  TrainConfig cfg = fast_config(51);
  cfg.max_epochs = 50;
  cfg.eval_every = 10;
  cfg.patience = 100; // run to the cap

  Rng rng = substream(99, 0);
  const MLP start = glorot_init({2, 4, 4, 1}, rng);

  TrainTask task;
  task.bvp = spec;
  task.hidden_widths = {4, 4};
  task.config = cfg;
  task.init_net = start;
  task.frozen = {true, false, false};
  const TrainResult r = train(task);
  CHECK(r.net.weights[0] == start.weights[0]); // first layer bitwise frozen
  CHECK(r.net.biases[0] == start.biases[0]);
  CHECK_FALSE(r.net.weights[1] == start.weights[1]);

  // width mismatch between init_net and the requested architecture
  TrainTask bad = task;
  bad.hidden_widths = {5, 5};
  CHECK_THROWS_AS(train(bad), ShapeError);
}

TEST_CASE("config validation: cadence and positivity rules") {
  TrainConfig cfg = fast_config(1);
  cfg.resample_every = 7; // does not divide eval_every = 10
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = fast_config(1);
  cfg.adam.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = fast_config(1);
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = fast_config(1);
  cfg.max_epochs = 5; // below one evaluation period
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = fast_config(1);
  cfg.adam.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("train record round-trips through its text form") {
  BVPSpec spec;
  TrainConfig cfg = fast_config(61);
  cfg.max_epochs = 30;
  cfg.patience = 50;
  TrainResult r = train(spec, {4}, cfg);
  r.record.checkpoint_path = "checkpoint.txt";

  const fs::path dir =
      fs::temp_directory_path() / ("layergen-trainer-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path p = dir / "record.txt";
  record_write(r.record, p);
  const TrainRecord back = record_read(p);

  CHECK(back.test_losses == r.record.test_losses); // %.17g exact round-trip
  CHECK(back.best_eval == r.record.best_eval);
  CHECK(back.final_test_loss == r.record.final_test_loss);
  CHECK(back.epochs == r.record.epochs);
  CHECK(back.aborted_non_finite == r.record.aborted_non_finite);
  CHECK(back.checkpoint_path == r.record.checkpoint_path);
  CHECK(back.config_snapshot == r.record.config_snapshot);

  atomic_write(p, "LAYERGEN-TRAINRECORD\nversion=2\n");
  CHECK_THROWS_AS(record_read(p), VersionError);
  atomic_write(p, "garbage\n");
  CHECK_THROWS_AS(record_read(p), ParseError);
  fs::remove_all(dir);
}

TEST_SUITE_END();
