// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "layergen/bvp.hpp"
#include "layergen/net.hpp"

namespace layergen {

/// Deterministic sample set for all similarity analyses: a uniform nx x ny
/// grid over the domain, boundary included. Point iy*nx + ix sits at
/// (x_of(ix), y_of(iy)) in GridField order, so a sampled column reshapes
/// directly onto a GridField.
struct SampleGrid {
  int nx = 100;
  int ny = 100;
  Rect domain;

  long n_points() const { return static_cast<long>(nx) * ny; }
  Eigen::MatrixX2d points() const;
  std::string id() const;
  void validate() const; // nx, ny >= 2
};

/// Post-activation outputs of one hidden layer over a shared sample set,
/// one row per point, one column per neuron. All pairwise comparisons
/// require matching sample identifiers.
struct ActivationMatrix {
  MatrixXd values;
  int layer_index = 0; // 1-based hidden layer
  int width = 0;
  long x_deci = 0; // task position x', in exact tenths
  long seed_id = 0;
  std::string sample_id;

  long n_points() const { return values.rows(); }
  int n_neurons() const { return static_cast<int>(values.cols()); }
  void validate() const; // n_points > n_neurons, finite values
};

/// Evaluates hidden layer `layer` (1-based, 1..depth) of `net` on the grid.
ActivationMatrix sample_activations(const MLP& net, int layer, const SampleGrid& grid);

/// Canonical correlation analysis result. Projections map *centered* full
/// activation matrices to canonical variates of unit sample variance;
/// rows of dropped (constant) columns are zero.
struct CCAResult {
  VectorXd correlations; // descending, clamped to [0,1]
  MatrixXd projection_a; // n_neurons_a x k
  MatrixXd projection_b; // n_neurons_b x k
  std::vector<int> dropped_a; // zero-variance columns removed before whitening
  std::vector<int> dropped_b;
};

/// CCA of two activation sets over the same sample set: center columns,
/// whiten each within-set covariance by its pseudo-inverse square root
/// (eigenvalues below 1e-12 of the largest are treated as rank-deficient),
/// then take the SVD of the whitened cross-covariance. The number of
/// correlations is the smaller effective rank.
CCAResult cca(const ActivationMatrix& a, const ActivationMatrix& b);

/// rho = sum of canonical correlations, the scalar layer similarity. If
/// `variance_threshold` is set (in (0,1]), each view is first reduced to
/// the leading principal directions capturing that fraction of its total
/// variance; rho then grows with the threshold (a larger kept subspace can
/// only gain correlated directions). Symmetric in its arguments.
double svcca_similarity(const ActivationMatrix& a, const ActivationMatrix& b,
                        std::optional<double> variance_threshold = std::nullopt);

/// Principal spectrum of one activation set: singular values of the centered
/// matrix, normalized by the largest.
struct SelfAnalysis {
  VectorXd spectrum;   // sigma_i / sigma_1, descending, spectrum[0] == 1
  MatrixXd projection; // right singular vectors; centered values * projection
                       // are the principal variates
  double rho_self = 0.0; // count of spectrum entries at or above the
                         // single-precision significance floor (see .cpp)
};
SelfAnalysis self_analysis(const ActivationMatrix& a);

/// Intrinsic dimensionality: the number of principal directions of the
/// centered activations that rise above a single-precision significance
/// floor, in [1, n_neurons]. Throws on constant (zero-spectrum) activations.
double self_similarity(const ActivationMatrix& a);

/// One canonical or principal variate reshaped onto the sample grid.
struct ComponentField {
  GridField field;
  double correlation = 0.0;
  int index = 0; // 1-based component number
};

/// Variates of `a` over its own grid: centered values times `projection`,
/// one field per column, labelled by `correlations`.
std::vector<ComponentField> component_fields(const ActivationMatrix& a,
                                             const MatrixXd& projection,
                                             const VectorXd& correlations,
                                             const SampleGrid& grid);

/// 1-based position k maximizing spectrum[k-1]/spectrum[k] over the first
/// `limit` entries — where the spectrum "drops drastically".
int spectral_knee(const VectorXd& spectrum, int limit);

} // namespace layergen
