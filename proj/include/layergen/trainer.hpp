// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "layergen/bvp.hpp"
#include "layergen/loss.hpp"
#include "layergen/net.hpp"

namespace layergen {

struct AdamParams {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// First/second moment estimates, congruent with the network they update.
struct AdamState {
  std::vector<MatrixXd> m_w, v_w;
  std::vector<VectorXd> m_b, v_b;

  static AdamState zeros_like(const MLP& net);
};

/// One Adam update with bias correction, t counted from 1. Layers flagged in
/// `frozen` keep their parameters and moments untouched (their gradient is
/// forced to zero). Throws NumericalError on a non-finite gradient.
void adam_step(MLP& net, const ParamGradient& grad, AdamState& state, long t,
               const AdamParams& hp, const std::vector<bool>* frozen = nullptr);

struct TrainConfig {
  long resample_every = 100; // epochs between training-set redraws
  long eval_every = 1000;    // epochs between test evaluations
  int patience = 5;          // stop after this many non-improving evaluations
  AdamParams adam;
  long n_interior = 1000; // desk-scale sampling; the reference protocol uses 1e4
  long n_per_edge = 1000;
  long test_scale = 10;
  LossNorm norm = LossNorm::L2;
  long max_epochs = 200000; // safety cap
  std::uint64_t seed = 0;

  void validate() const; // resample_every must divide eval_every
};

struct TrainRecord {
  std::vector<double> test_losses; // one per evaluation, in order
  long best_eval = -1;             // index into test_losses
  double final_test_loss = 0.0;    // loss at best_eval
  long epochs = 0;                 // epochs actually run
  double wall_seconds = 0.0;
  bool aborted_non_finite = false;
  std::vector<std::pair<std::string, std::string>> config_snapshot;
  std::string checkpoint_path; // filled by the orchestrator

  void validate() const;
};

void record_write(const TrainRecord& record, const std::filesystem::path& path);
TrainRecord record_read(const std::filesystem::path& path);

/// Optional hooks into the training loop (logging, tests).
struct TrainObserver {
  virtual ~TrainObserver() = default;
  virtual void on_resample(long epoch) { (void)epoch; }
  virtual void on_eval(long epoch, double test_loss, double best) {
    (void)epoch;
    (void)test_loss;
    (void)best;
  }
};

struct TrainResult {
  MLP net; // parameters of the best-observed evaluation
  TrainRecord record;
};

struct TrainTask {
  BVPSpec bvp;
  std::vector<int> hidden_widths;
  TrainConfig config;
  std::optional<MLP> init_net; // transfer: start from a spliced network
  std::vector<bool> frozen;    // per layer; empty = train everything
};

/// Full-batch Adam with periodic resampling and patience-based stopping.
/// The training set is redrawn at every epoch e with e % resample_every == 0
/// (0-indexed, so epoch 0 draws the first set); the test set is drawn once;
/// the test loss is evaluated after the update of every eval_every-th epoch.
/// Stops once the best test loss has not strictly improved for `patience`
/// consecutive evaluations, or at max_epochs. Returns the parameters of the
/// best evaluation, not the last.
TrainResult train(const TrainTask& task, TrainObserver* observer = nullptr);
TrainResult train(const BVPSpec& spec, const std::vector<int>& hidden_widths,
                  const TrainConfig& config, TrainObserver* observer = nullptr);

/// Deterministic seed for one grid point of the experiment ensemble, mixing
/// (x' index, r index, hidden layer count, width, repetition core) through a
/// fixed 64-bit hash. Injective over any practical experiment grid.
std::uint64_t derive_seed(long x_index, long r_index, int n_layers, int width,
                          std::uint64_t seed_core);

} // namespace layergen
