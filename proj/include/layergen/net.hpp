// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "layergen/errors.hpp"
#include "layergen/rng.hpp"

namespace layergen {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::Vector2d;

/// Hidden-layer activation. Only smooth activations are admissible: the
/// training loss is built from second input-derivatives, and piecewise-linear
/// activations have none anywhere.
enum class Activation { Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Fully-connected network. weights[l] is (fan_out x fan_in); the last layer
/// is a linear readout, all earlier layers apply the activation.
struct MLP {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;
  Activation activation = Activation::Tanh;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int depth() const { return layer_count() - 1; } // hidden layers

  /// [input_dim, hidden..., output_dim]
  std::vector<int> widths() const;

  /// Throws ConfigError/ShapeError/NumericalError if shapes do not chain,
  /// any width is < 1 or any parameter is non-finite.
  void validate() const;

  bool equals(const MLP& other) const;
};

/// Value and exact input-derivatives of the scalar network output at a point.
/// input_pure_second holds (d2u/dx2, d2u/dy2); mixed partials are never
/// needed since the Laplacian is their sum.
struct DerivativeBundle {
  double value = 0.0;
  Vector2d input_gradient = Vector2d::Zero();
  Vector2d input_pure_second = Vector2d::Zero();

  double laplacian() const { return input_pure_second.sum(); }
};

/// Gradient of a scalar with respect to every network parameter.
struct ParamGradient {
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;

  static ParamGradient zeros_like(const MLP& net);
  bool congruent_with(const MLP& net) const;
  bool all_finite() const;
};

/// Glorot-uniform weights, zero biases. Each weight entry is drawn uniformly
/// from [-L, L] with L = sqrt(6 / (fan_in + fan_out)), layer by layer in
/// order, so the result is reproducible for a given generator state.
MLP glorot_init(const std::vector<int>& widths, Rng& rng);

/// Post-activation values of every layer (hidden layers then linear output)
/// at the given points. Each matrix has one row per point, one column per
/// neuron. Throws NumericalError on non-finite coordinates.
std::vector<MatrixXd> forward_activations(const MLP& net,
                                          const Eigen::Ref<const Eigen::MatrixX2d>& points);

/// Scalar output at the given points (last column chain only).
VectorXd forward_values(const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& points);

/// Exact value, input gradient and pure second input-derivatives at one
/// point, by layerwise propagation of (a, da/dxi, d2a/dxi2).
DerivativeBundle forward_with_input_derivatives(const MLP& net, const Vector2d& point);

/// Batched variant: rows of the outputs correspond to rows of `points`.
struct BatchDerivatives {
  VectorXd value;
  VectorXd grad_x, grad_y;
  VectorXd second_x, second_y;
  VectorXd laplacian() const { return second_x + second_y; }
};
BatchDerivatives forward_with_input_derivatives_batch(
    const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& points);

// --- checkpoint files ---------------------------------------------------
//
// Plain-text format, bit-exact round trip (values printed with 17
// significant digits):
//
//   LAYERGEN-CHECKPOINT
//   version=1
//   widths=2 16 16 16 16 1
//   activation=tanh
//   seed=42
//   meta.<key>=<value>     (zero or more, sorted by key)
//   W1 16 2
//   <16 rows of 2 values>
//   b1 16
//   <16 values, one per line>
//   ... per layer ...
//   END

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> extra; // training metadata, free-form
};

void checkpoint_write(const MLP& net, const CheckpointMeta& meta,
                      const std::filesystem::path& path);

struct Checkpoint {
  MLP net;
  CheckpointMeta meta;
};
Checkpoint checkpoint_read(const std::filesystem::path& path);

} // namespace layergen
