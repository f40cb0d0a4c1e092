// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "layergen/bvp.hpp"
#include "layergen/net.hpp"

namespace layergen {

/// Mean DGM loss of `net` over `batch` (matches pointwise_loss averaged over
/// the set). Boundary points take a value-only path; interior points carry
/// the full second-derivative propagation.
double loss_value(const MLP& net, const TaggedPointSet& batch,
                  const BVPSpec& spec, LossNorm norm);

/// Mean loss and its exact gradient with respect to every weight and bias,
/// by a reverse pass over the extended (value, d/dxi, d2/dxi2) forward
/// computation. Throws ConfigError on an empty batch.
///
/// The L1 residual subgradient at an exactly-zero residual is taken as 0.
std::pair<double, ParamGradient> loss_param_gradient(const MLP& net,
                                                     const TaggedPointSet& batch,
                                                     const BVPSpec& spec,
                                                     LossNorm norm);

} // namespace layergen
