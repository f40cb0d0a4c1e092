// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>

#include "layergen/config.hpp"
#include "layergen/generality.hpp"
#include "layergen/textio.hpp"
#include "layergen/transfer.hpp"

namespace layergen {

/// Canonical file layout under one output root. Checkpoints and every
/// derived data product live at fixed relative paths, so any stage can be
/// re-run or verified in isolation.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path run_dir(int width, long x_deci, long seed) const;
  std::string run_rel(int width, long x_deci, long seed) const; // checkpoint, manifest key
  std::filesystem::path transfer_dir(int width, TransferGroup g, int n, long donor,
                                     long recipient) const;
  std::string transfer_rel(int width, TransferGroup g, int n, long donor,
                           long recipient) const;
  std::filesystem::path analysis_dir() const { return root / "analysis"; }
  std::filesystem::path oracle_dir() const { return root / "oracle"; }
  std::filesystem::path components_dir() const { return root / "components"; }

  // Manifests cover the deterministic artifacts a later stage may consume
  // (checkpoints, exported tables/fields). Run records carry wall-clock
  // timings and stay outside them.
  std::filesystem::path train_manifest() const { return root / "train-manifest.txt"; }
  std::filesystem::path transfer_manifest() const { return root / "transfer-manifest.txt"; }
  std::filesystem::path analyze_manifest() const { return root / "analyze-manifest.txt"; }
  std::filesystem::path metrics_manifest() const { return root / "metrics-manifest.txt"; }
  std::filesystem::path oracle_manifest() const { return root / "oracle-manifest.txt"; }
  std::filesystem::path components_manifest() const { return root / "components-manifest.txt"; }
};

/// Optional (width, x', seed) restriction from the command line; anything
/// unset admits every value.
struct Filters {
  std::optional<int> width;
  std::optional<long> x_deci;
  std::optional<long> seed;

  bool admits(int w, long x, long s) const {
    return (!width || *width == w) && (!x_deci || *x_deci == x) && (!seed || *seed == s);
  }
};

/// Trains the (width x x' x seed) grid; complete runs are skipped, so the
/// command is resumable and idempotent. Rebuilds the train manifest over all
/// complete checkpoints at the end.
void cmd_train(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log);

/// Similarity matrices (text/CSV/PGM) and decomposed group statistics per
/// (width, layer), from manifest-verified checkpoints.
void cmd_analyze(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log);

/// The per-(width, layer) metric table: intrinsic dimensionality,
/// reproducibility, specificity with propagated uncertainties.
void cmd_metrics(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log);

/// The four-arm transfer protocol for every configured transfer width;
/// recipient trainings are persisted and resumable like cmd_train. Emits
/// outcome and specificity tables.
void cmd_transfer(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log);

/// Finite-difference reference fields per task position plus a relative-L2
/// error table for every completed run.
void cmd_oracle(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log);

/// Principal-component fields of every hidden layer of the selected
/// networks: PGM for the first nine components, text for the leading one,
/// spectra and knee positions as CSV.
void cmd_components(const ExperimentConfig& cfg, const Filters& filters, std::ostream& log);

} // namespace layergen
