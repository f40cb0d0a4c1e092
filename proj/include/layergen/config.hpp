// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layergen/svcca.hpp"
#include "layergen/trainer.hpp"
#include "layergen/transfer.hpp"

namespace layergen {

/// Everything one experiment needs, loaded from a sectioned key = value
/// file. A run is fully described by this file plus the code version; the
/// only override outside it is the output root (--out / LAYERGEN_OUT).
///
///   [experiment]  widths, depth, x_start, x_step, x_count, seeds,
///                 seed_core, out_root
///   [bvp]         y_source, r, eta, x0, x1, y0, y1
///   [train]       n_interior, n_per_edge, test_scale, resample_every,
///                 eval_every, patience, max_epochs, alpha, beta1, beta2,
///                 eps, norm
///   [svcca]       grid_nx, grid_ny, threshold ("none" or a fraction)
///   [transfer]    widths, x_a, x_b, n_values, donor_seeds, recipient_seeds
///   [oracle]      n
///   [run]         jobs
///
/// Unknown sections or keys are errors; every key has a default, so the
/// empty file is a valid (if tiny) experiment.
struct ExperimentConfig {
  std::vector<int> widths{16};
  int depth = 4;
  long x_start_deci = 0;
  long x_step_deci = 2;
  long x_count = 1;
  long seeds = 1; // seed ids 0 .. seeds-1
  std::uint64_t seed_core = 0;
  std::filesystem::path out_root = "runs";

  BVPSpec bvp;      // x_source is overwritten per task position
  TrainConfig train; // seed is overwritten per run

  SampleGrid grid; // domain mirrors the BVP domain
  std::optional<double> svcca_threshold;

  std::vector<int> transfer_widths; // defaults to `widths`
  long transfer_x_a_deci = 0;
  long transfer_x_b_deci = 6;
  std::vector<int> transfer_n_values{1, 2, 3, 4};
  std::vector<long> donor_seeds{0, 1};
  std::vector<long> recipient_seeds{0, 1};

  int oracle_n = 129;
  int jobs = 1;

  std::vector<long> x_grid() const; // task positions, in deci
  std::vector<int> hidden_widths(int width) const;
  TransferProtocol transfer_protocol() const;
  void validate() const;
};

/// Parse from text; `origin` names the source in error messages.
ExperimentConfig config_parse(const std::string& text, const std::string& origin);
ExperimentConfig config_load(const std::filesystem::path& path);

} // namespace layergen
