// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "layergen/net.hpp"

namespace layergen {

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
  double x0 = -1.0, x1 = 1.0;
  double y0 = -1.0, y1 = 1.0;

  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
  bool strictly_inside(double x, double y) const {
    return x > x0 && x < x1 && y > y0 && y < y1;
  }
  bool on_boundary(double x, double y) const {
    return contains(x, y) && (x == x0 || x == x1 || y == y0 || y == y1);
  }
};

/// One member of the Poisson task family: a Gaussian bump source of width r
/// centered at (x_source, y_source), zero Dirichlet values on the boundary,
/// boundary loss weight eta.
struct BVPSpec {
  double x_source = 0.0;
  double y_source = 0.0;
  double r = 0.1;
  double eta = 1.0;
  Rect domain;

  void validate() const; // throws ConfigError
};

/// s(x,y) = -exp(-((x-x')^2+(y-y')^2)/(2 r^2)) / (2 pi r^2).
/// Strictly negative; integrates to -1 over the plane.
double source_term(double x, double y, const BVPSpec& spec);
VectorXd source_term(const Eigen::Ref<const Eigen::MatrixX2d>& points, const BVPSpec& spec);

enum class PointTag : std::uint8_t { Interior, Boundary };
enum class LossNorm { L1, L2 };

std::string to_string(LossNorm n);
LossNorm loss_norm_from_string(const std::string& s);

/// Sampled collocation points with interior/boundary tags. Boundary points
/// lie exactly on the rectangle edges (one coordinate equals a bound).
struct TaggedPointSet {
  Eigen::MatrixX2d points;
  std::vector<PointTag> tags;

  long size() const { return points.rows(); }
  long count(PointTag t) const;
  void validate(const Rect& domain) const; // tag/location consistency
};

/// Per-point DGM loss: interior points contribute |lap u - s|^k, boundary
/// points eta * |u|^k, with k = 2 (L2) or 1 (L1). Exactly one term is
/// nonzero for any given point.
double pointwise_loss(const DerivativeBundle& bundle, const Vector2d& p,
                      PointTag tag, const BVPSpec& spec, LossNorm norm);

/// n_interior points uniform over the open rectangle, then n_per_edge points
/// per edge in order bottom, right, top, left. Edges are half-open so each
/// corner belongs to exactly one edge.
TaggedPointSet sample_training_set(Rng& rng, const BVPSpec& spec,
                                   long n_interior, long n_per_edge);

/// Same construction with all counts multiplied by `scale`.
TaggedPointSet sample_test_set(Rng& rng, const BVPSpec& spec,
                               long n_interior, long n_per_edge, long scale = 10);

/// Scalar field sampled on a uniform nx x ny grid over a rectangle.
/// values[iy*nx + ix] is the value at (x0 + ix*hx, y0 + iy*hy).
struct GridField {
  int nx = 0, ny = 0;
  Rect domain;
  VectorXd values;

  double at(int ix, int iy) const { return values[static_cast<long>(iy) * nx + ix]; }
  double x_of(int ix) const { return domain.x0 + ix * (domain.x1 - domain.x0) / (nx - 1); }
  double y_of(int iy) const { return domain.y0 + iy * (domain.y1 - domain.y0) / (ny - 1); }
  void validate() const;
};

/// Reference solver: 5-point stencil for lap u = s with u = 0 on the
/// boundary, on an n x n uniform grid, solved directly (sparse Cholesky).
/// Throws NumericalError with a residual report if the solve is inaccurate.
GridField fd_solve(const BVPSpec& spec, int n);
GridField fd_solve(const std::function<double(double, double)>& source, const Rect& domain,
                   int n);

/// Largest absolute defect of the discrete stencil equation over interior
/// nodes of `field` against the spec's source term.
double stencil_residual(const GridField& field, const BVPSpec& spec);

/// || u_net - oracle ||_2 / || oracle ||_2 over the oracle's grid nodes.
double relative_l2_error(const MLP& net, const GridField& oracle);

// --- GridField files ------------------------------------------------------
// Text format: one header line "nx ny x0 x1 y0 y1", then nx*ny values in
// grid order (ix fastest), one per line, 17 significant digits.
void grid_write_text(const GridField& field, const std::filesystem::path& path);
GridField grid_read_text(const std::filesystem::path& path);

// 8-bit binary PGM under linear min-max normalization; the mapping is
// recorded in a sidecar "<path>.meta" (min=..., max=...).
void grid_write_pgm(const GridField& field, const std::filesystem::path& path);

// Reconstructs the field from a PGM and its sidecar; values are quantized,
// so they match the original only to (max-min)/255 / 2. The grid's domain is
// not stored in the image and must be supplied.
GridField grid_read_pgm(const std::filesystem::path& path, const Rect& domain);

} // namespace layergen
