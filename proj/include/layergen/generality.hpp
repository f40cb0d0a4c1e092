// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "layergen/svcca.hpp"

namespace layergen {

/// One trained network's place in an ensemble.
struct EnsembleMember {
  long x_deci = 0; // task position x', in exact tenths
  long seed_id = 0;
};

/// Ordered ensemble over a (position x seed) grid. Members are grouped by
/// position — all seeds of one x' are contiguous — with the same number of
/// seeds per position and uniformly spaced positions, so similarity
/// matrices decompose into the self / same-task / cross-task regions by
/// index arithmetic alone.
struct EnsembleIndex {
  std::vector<EnsembleMember> members;
  int width = 0;
  int depth = 0;

  long size() const { return static_cast<long>(members.size()); }
  long positions() const;          // P: distinct x' values
  long seeds_per_position() const; // S: uniform block size
  long position_step() const;      // deci spacing between consecutive x'
  void validate() const;
};

/// Pairwise layer similarities over an ensemble; the diagonal holds
/// self-similarities (intrinsic dimensionalities).
struct SimilarityMatrix {
  MatrixXd m;
  EnsembleIndex index;
  int layer = 0;

  void validate() const; // square over the index, symmetric, nonnegative
};

/// entry (i,j) = svcca_similarity of hidden layer `layer` of nets i and j on
/// the grid; diagonal = self_similarity. Only the upper triangle is
/// computed, then mirrored. `nets` must align with `index.members`.
SimilarityMatrix build_similarity_matrix(const std::vector<MLP>& nets,
                                         const EnsembleIndex& index, int layer,
                                         const SampleGrid& grid,
                                         std::optional<double> variance_threshold = std::nullopt);

struct GroupStats {
  double mean = 0.0;
  double min_v = 0.0;
  double max_v = 0.0;
  double variance = 0.0; // unbiased sample variance (0 for one sample)
  long count = 0;

  static GroupStats from(const std::vector<double>& xs);
  double variance_of_mean() const { return count > 0 ? variance / count : 0.0; }
};

/// Decomposition of one similarity matrix into its index regions.
struct LayerStats {
  int layer = 0;
  GroupStats self_group; // diagonal: rho_self, all P*S networks
  GroupStats same_task;  // block diagonal off the main diagonal: same x', different seed
  std::vector<std::pair<long, GroupStats>> cross; // (delta x' in deci, stats), ascending
};

/// Partition the matrix entries: P*S self entries, P*S(S-1)/2 same-task
/// pairs, (P-k)*S*S pairs per position offset k. Same-task statistics
/// exclude the diagonal.
LayerStats decompose(const SimilarityMatrix& matrix);

struct MetricValue {
  double value = 0.0;
  double uncertainty = 0.0; // first-order propagation, groups uncorrelated
};

/// <rho_{dx'=0}> / <rho_self>; near 1 when a layer is reproducible across
/// seeds.
MetricValue reproducibility(const LayerStats& stats);

/// mean over dx' > 0 of |<rho_0> - <rho_dx'>| / <rho_0>; zero iff the layer
/// looks the same across all task offsets. Requires at least one dx' > 0
/// group.
MetricValue specificity(const LayerStats& stats);

// --- report emission --------------------------------------------------------

/// One row of the per-(width, layer) metric table.
struct MetricsRow {
  int width = 0;
  int layer = 0;
  GroupStats dimensionality; // = self-similarity group
  MetricValue repro;
  MetricValue spec;
};

/// CSV: width,layer,dim_mean,dim_min,dim_max,repro,repro_unc,spec,spec_unc.
/// Fixed-precision floats so repeated runs emit identical bytes.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// CSV of every group of a decomposed ensemble, one row per (layer, group):
/// width,layer,group,delta,count,mean,variance,min,max. `delta` is the task
/// offset as a decimal (0.0 for same_task, empty for self).
std::string layer_stats_csv(int width, const std::vector<LayerStats>& layers);

/// CSV of one similarity matrix with x'/seed row labels.
std::string similarity_csv(const SimilarityMatrix& matrix);

// Plain-text matrix format with the ensemble index inline; values at 17
// significant digits so the round trip is exact.
void similarity_write_text(const SimilarityMatrix& matrix, const std::filesystem::path& path);
SimilarityMatrix similarity_read_text(const std::filesystem::path& path);

} // namespace layergen
