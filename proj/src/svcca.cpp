// SPDX-License-Identifier: Apache-2.0
#include "layergen/svcca.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "layergen/textio.hpp"

namespace layergen {

void SampleGrid::validate() const {
  if (nx < 2 || ny < 2) throw ConfigError("sample grid needs at least 2 points per axis");
  if (!(domain.x0 < domain.x1) || !(domain.y0 < domain.y1))
    throw ConfigError("sample grid domain is degenerate");
}

Eigen::MatrixX2d SampleGrid::points() const {
  validate();
  Eigen::MatrixX2d pts(n_points(), 2);
  const double hx = (domain.x1 - domain.x0) / (nx - 1);
  const double hy = (domain.y1 - domain.y0) / (ny - 1);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const long p = static_cast<long>(iy) * nx + ix;
      pts(p, 0) = domain.x0 + ix * hx;
      pts(p, 1) = domain.y0 + iy * hy;
    }
  return pts;
}

std::string SampleGrid::id() const {
  std::ostringstream os;
  os << "grid:" << nx << "x" << ny << ":" << format_exact(domain.x0) << ","
     << format_exact(domain.x1) << "," << format_exact(domain.y0) << ","
     << format_exact(domain.y1);
  return os.str();
}

void ActivationMatrix::validate() const {
  if (values.rows() <= values.cols())
    throw ShapeError("activation matrix needs more points than neurons (" +
                     std::to_string(values.rows()) + " x " + std::to_string(values.cols()) + ")");
  if (!values.allFinite()) throw NumericalError("activation matrix contains non-finite values");
}

ActivationMatrix sample_activations(const MLP& net, int layer, const SampleGrid& grid) {
  if (layer < 1 || layer > net.depth())
    throw ConfigError("hidden layer index " + std::to_string(layer) + " out of range 1.." +
                      std::to_string(net.depth()));
  ActivationMatrix out;
  out.values = forward_activations(net, grid.points())[static_cast<size_t>(layer - 1)];
  out.layer_index = layer;
  out.width = out.n_neurons();
  out.sample_id = grid.id();
  out.validate();
  return out;
}

namespace {

constexpr double k_rank_cutoff = 1e-12; // relative eigenvalue cutoff for whitening

struct CenteredView {
  MatrixXd xc;              // n x kept, column-centered
  std::vector<int> kept;    // original column indices
  std::vector<int> dropped; // constant columns, removed
};

// Constant columns carry no direction and would make the whitening
// singular in a way the cutoff cannot attribute; detect them exactly
// (a dead or saturated neuron repeats the identical double).
CenteredView center_and_drop(const MatrixXd& x) {
  CenteredView v;
  for (int j = 0; j < x.cols(); ++j) {
    if (x.col(j).maxCoeff() == x.col(j).minCoeff())
      v.dropped.push_back(j);
    else
      v.kept.push_back(j);
  }
  v.xc.resize(x.rows(), static_cast<long>(v.kept.size()));
  for (size_t k = 0; k < v.kept.size(); ++k) {
    const auto col = x.col(v.kept[k]);
    v.xc.col(static_cast<long>(k)) = col.array() - col.mean();
  }
  return v;
}

// Pseudo-inverse square root of the sample covariance of a centered view:
// columns map whitened coordinates back onto kept-neuron axes.
MatrixXd whitening_basis(const MatrixXd& xc) {
  const double n1 = static_cast<double>(xc.rows() - 1);
  const MatrixXd cov = (xc.transpose() * xc) / n1;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw NumericalError("covariance eigendecomposition failed");
  const VectorXd& lam = es.eigenvalues(); // ascending
  const double cutoff = k_rank_cutoff * lam.maxCoeff();
  std::vector<long> keep;
  for (long i = 0; i < lam.size(); ++i)
    if (lam[i] > cutoff) keep.push_back(i);
  MatrixXd basis(cov.rows(), static_cast<long>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k)
    basis.col(static_cast<long>(k)) =
        es.eigenvectors().col(keep[k]) / std::sqrt(lam[keep[k]]);
  return basis;
}

void scatter_rows(const MatrixXd& compact, const std::vector<int>& kept, MatrixXd& full) {
  full.setZero();
  for (size_t k = 0; k < kept.size(); ++k) full.row(kept[k]) = compact.row(static_cast<long>(k));
}

void check_compatible(const ActivationMatrix& a, const ActivationMatrix& b) {
  a.validate();
  b.validate();
  if (a.sample_id != b.sample_id)
    throw ConfigError("activation matrices come from different sample sets ('" + a.sample_id +
                      "' vs '" + b.sample_id + "')");
  if (a.n_points() != b.n_points())
    throw ShapeError("activation matrices disagree on point count");
}

// Project onto the leading principal directions holding `fraction` of the
// total variance (squared singular values).
ActivationMatrix reduce_view(const ActivationMatrix& a, double fraction) {
  MatrixXd xc = a.values.rowwise() - a.values.colwise().mean();
  Eigen::BDCSVD<MatrixXd> svd(xc, Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double total = s.array().square().sum();
  if (!(total > 0.0)) throw NumericalError("cannot reduce constant activations");
  int k = 0;
  double acc = 0.0;
  while (k < s.size() && acc < fraction * total - 1e-15 * total) {
    acc += s[k] * s[k];
    ++k;
  }
  k = std::max(k, 1);
  ActivationMatrix out = a;
  out.values = xc * svd.matrixV().leftCols(k);
  return out;
}

} // namespace

CCAResult cca(const ActivationMatrix& a, const ActivationMatrix& b) {
  check_compatible(a, b);
  const CenteredView va = center_and_drop(a.values);
  const CenteredView vb = center_and_drop(b.values);
  if (va.kept.empty() || vb.kept.empty())
    throw NumericalError("CCA undefined: one view has only constant columns");

  const MatrixXd wa = whitening_basis(va.xc);
  const MatrixXd wb = whitening_basis(vb.xc);
  const double n1 = static_cast<double>(va.xc.rows() - 1);
  const MatrixXd cross = (va.xc.transpose() * vb.xc) / n1;
  const MatrixXd t = wa.transpose() * cross * wb;

  Eigen::JacobiSVD<MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  CCAResult out;
  out.correlations = svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);
  const MatrixXd pa = wa * svd.matrixU();
  const MatrixXd pb = wb * svd.matrixV();
  out.projection_a.resize(a.n_neurons(), pa.cols());
  out.projection_b.resize(b.n_neurons(), pb.cols());
  scatter_rows(pa, va.kept, out.projection_a);
  scatter_rows(pb, vb.kept, out.projection_b);
  out.dropped_a = va.dropped;
  out.dropped_b = vb.dropped;
  return out;
}

double svcca_similarity(const ActivationMatrix& a, const ActivationMatrix& b,
                        std::optional<double> variance_threshold) {
  if (variance_threshold) {
    const double f = *variance_threshold;
    if (!(f > 0.0 && f <= 1.0))
      throw ConfigError("variance threshold must lie in (0, 1]");
    return cca(reduce_view(a, f), reduce_view(b, f)).correlations.sum();
  }
  return cca(a, b).correlations.sum();
}

SelfAnalysis self_analysis(const ActivationMatrix& a) {
  a.validate();
  const MatrixXd xc = a.values.rowwise() - a.values.colwise().mean();
  Eigen::BDCSVD<MatrixXd> svd(xc, Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  if (!(s.size() > 0) || !(s[0] > 0.0))
    throw NumericalError("self-similarity undefined for constant activations");
  SelfAnalysis out;
  out.spectrum = s / s[0];
  out.projection = svd.matrixV();
  // Intrinsic dimensionality: the number of principal directions that clear
  // a single-precision significance floor. Activations are sampled in double
  // precision here, but activation pipelines conventionally compute in
  // float32, where elementwise roundoff of an n x w matrix perturbs singular
  // values by up to ~eps32 * (sqrt(n) + sqrt(w)) * sigma_1 (the operator-norm
  // bound for an i.i.d. noise matrix). Directions below that floor would be
  // unmeasurable in such a pipeline; counting them would inflate the
  // dimensionality of nearly-degenerate representations.
  const double noise_floor =
      static_cast<double>(std::numeric_limits<float>::epsilon()) *
      (std::sqrt(static_cast<double>(a.n_points())) +
       std::sqrt(static_cast<double>(a.n_neurons())));
  long significant = 0;
  for (long i = 0; i < out.spectrum.size(); ++i)
    if (out.spectrum[i] >= noise_floor) ++significant;
  out.rho_self = static_cast<double>(std::max<long>(significant, 1));
  return out;
}

double self_similarity(const ActivationMatrix& a) { return self_analysis(a).rho_self; }

std::vector<ComponentField> component_fields(const ActivationMatrix& a,
                                             const MatrixXd& projection,
                                             const VectorXd& correlations,
                                             const SampleGrid& grid) {
  grid.validate();
  a.validate();
  if (a.sample_id != grid.id())
    throw ConfigError("activations were not sampled on the requested grid");
  if (a.n_points() != grid.n_points())
    throw ShapeError("activation rows do not cover the grid");
  if (projection.rows() != a.n_neurons())
    throw ShapeError("projection rows must match neuron count");
  if (correlations.size() != projection.cols())
    throw ShapeError("one correlation per projection column expected");

  const MatrixXd xc = a.values.rowwise() - a.values.colwise().mean();
  const MatrixXd variates = xc * projection;
  std::vector<ComponentField> fields;
  fields.reserve(static_cast<size_t>(variates.cols()));
  for (long c = 0; c < variates.cols(); ++c) {
    ComponentField f;
    f.field.nx = grid.nx;
    f.field.ny = grid.ny;
    f.field.domain = grid.domain;
    f.field.values = variates.col(c);
    f.correlation = correlations[c];
    f.index = static_cast<int>(c) + 1;
    fields.push_back(std::move(f));
  }
  return fields;
}

int spectral_knee(const VectorXd& spectrum, int limit) {
  // Candidate knees are 1..limit; the ratio at knee k reads spectrum[k], so
  // the last entry can bound a knee but never hold one.
  const int last = std::min<int>(limit, static_cast<int>(spectrum.size()) - 1);
  if (last < 1) throw ConfigError("spectral knee needs at least two spectrum entries");
  int best = 1;
  double best_ratio = -1.0;
  for (int k = 1; k <= last; ++k) {
    const double denom = spectrum[k];
    const double ratio = denom > 0.0 ? spectrum[k - 1] / denom
                                     : std::numeric_limits<double>::infinity();
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  return best;
}

} // namespace layergen
