// SPDX-License-Identifier: Apache-2.0
#include "layergen/loss.hpp"

#include <cmath>
#include <mutex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "activation_math.hpp"

namespace layergen {

namespace {

using Eigen::ArrayXXd;

// Full-batch training materialises multi-hundred-KB Eigen temporaries every
// epoch. glibc's default tuning serves blocks of that size with mmap and
// hands them straight back to the kernel on free, so each epoch pays the
// page-fault cost of its whole tape again — in practice several times the
// arithmetic cost. Raising the thresholds keeps the per-epoch working set
// on the heap; truly large one-off blocks (test-set evaluations, dense
// solves) still go through mmap.
void tune_allocator_once() {
#if defined(__GLIBC__)
  static std::once_flag flag;
  std::call_once(flag, [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 64 << 20);
  });
#endif
}

// Tape of the extended forward pass. The five propagated streams — the
// activation a and its input derivatives gx, gy, sxx, syy — share every
// layer's weight multiplication, so they travel stacked in one
// (5n x width) matrix: rows [0,n) hold a, then gx, gy, sx, sy. One GEMM
// per layer replaces five, which is what keeps full-batch training cheap.
//
// state[l] (l = 0..L) is the stacked post-layer state. pre[l] (stored for
// l+1 < L only) is the stacked pre-activation state [p; dx; dy; ex; ey],
// whose derivative blocks the reverse sweep re-reads.
struct ExtendedTape {
  long n = 0;
  std::vector<MatrixXd> state;
  std::vector<MatrixXd> pre;
};

ExtendedTape extended_forward(const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& x) {
  const long n = x.rows();
  const int L = net.layer_count();
  ExtendedTape t;
  t.n = n;
  t.state.resize(L + 1);
  t.pre.resize(L);

  MatrixXd s0 = MatrixXd::Zero(5 * n, 2);
  s0.topRows(n) = x;
  s0.block(n, 0, n, 1).setOnes();     // d a0 / dx
  s0.block(2 * n, 1, n, 1).setOnes(); // d a0 / dy
  t.state[0] = std::move(s0);

  for (int l = 0; l < L; ++l) {
    const MatrixXd& w = net.weights[l];
    MatrixXd p5;
    p5.noalias() = t.state[l] * w.transpose();
    p5.topRows(n).rowwise() += net.biases[l].transpose();
    if (l + 1 < L) {
      const ArrayXXd tv = detail::tanh_activation(p5.topRows(n).array());
      const ArrayXXd p1 = 1.0 - tv.square();
      const ArrayXXd p2 = -2.0 * tv * p1;
      const auto dx = p5.middleRows(n, n).array();
      const auto dy = p5.middleRows(2 * n, n).array();
      const auto ex = p5.middleRows(3 * n, n).array();
      const auto ey = p5.middleRows(4 * n, n).array();
      MatrixXd next(5 * n, w.rows());
      next.topRows(n) = tv.matrix();
      next.middleRows(n, n) = (p1 * dx).matrix();
      next.middleRows(2 * n, n) = (p1 * dy).matrix();
      next.middleRows(3 * n, n) = (p2 * dx.square() + p1 * ex).matrix();
      next.middleRows(4 * n, n) = (p2 * dy.square() + p1 * ey).matrix();
      t.state[l + 1] = std::move(next);
      t.pre[l] = std::move(p5);
    } else {
      t.state[l + 1] = std::move(p5); // linear readout
    }
  }
  return t;
}

// Reverse sweep over the extended tape. a_bar/sx_bar/sy_bar seed the output
// adjoints (first derivatives never enter the loss, so their output adjoint
// is zero). Adjoints travel stacked like the forward states, so the
// parameter gradient of a layer is a single (w_out x 5n)(5n x w_in) product.
// Accumulates into grad.
void extended_reverse(const MLP& net, const ExtendedTape& t, const VectorXd& a_bar_out,
                      const VectorXd& sx_bar_out, const VectorXd& sy_bar_out,
                      ParamGradient& grad) {
  const int L = net.layer_count();
  const long n = t.n;

  MatrixXd b = MatrixXd::Zero(5 * n, 1);
  b.topRows(n) = a_bar_out;
  b.middleRows(3 * n, n) = sx_bar_out;
  b.middleRows(4 * n, n) = sy_bar_out;

  for (int l = L - 1; l >= 0; --l) {
    const MatrixXd& w = net.weights[l];
    MatrixXd pb5;
    if (l + 1 < L) {
      const auto tv = t.state[l + 1].topRows(n).array();
      const ArrayXXd p1 = 1.0 - tv.square();
      const ArrayXXd p2 = -2.0 * tv * p1;
      const ArrayXXd p3 = -2.0 * p1.square() + 4.0 * tv.square() * p1;
      const auto dx = t.pre[l].middleRows(n, n).array();
      const auto dy = t.pre[l].middleRows(2 * n, n).array();
      const auto ex = t.pre[l].middleRows(3 * n, n).array();
      const auto ey = t.pre[l].middleRows(4 * n, n).array();
      const auto ab = b.topRows(n).array();
      const auto gxb = b.middleRows(n, n).array();
      const auto gyb = b.middleRows(2 * n, n).array();
      const auto sxb = b.middleRows(3 * n, n).array();
      const auto syb = b.middleRows(4 * n, n).array();
      pb5.resize(5 * n, w.rows());
      pb5.topRows(n) = (ab * p1 + gxb * p2 * dx + gyb * p2 * dy +
                        sxb * (p3 * dx.square() + p2 * ex) +
                        syb * (p3 * dy.square() + p2 * ey))
                           .matrix();
      pb5.middleRows(n, n) = (gxb * p1 + 2.0 * sxb * p2 * dx).matrix();
      pb5.middleRows(2 * n, n) = (gyb * p1 + 2.0 * syb * p2 * dy).matrix();
      pb5.middleRows(3 * n, n) = (sxb * p1).matrix();
      pb5.middleRows(4 * n, n) = (syb * p1).matrix();
    } else {
      pb5 = std::move(b);
    }

    grad.weights[l].noalias() += pb5.transpose() * t.state[l];
    grad.biases[l].noalias() += pb5.topRows(n).colwise().sum().transpose();

    if (l > 0) b.noalias() = pb5 * w;
  }
}

// Value-only tape: boundary points contribute only through u.
std::vector<MatrixXd> value_forward(const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& x) {
  const int L = net.layer_count();
  std::vector<MatrixXd> a(L + 1);
  a[0] = x;
  for (int l = 0; l < L; ++l) {
    MatrixXd p = (a[l] * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
    a[l + 1] = (l + 1 < L) ? MatrixXd(detail::tanh_activation(p.array()).matrix())
                           : std::move(p);
  }
  return a;
}

void value_reverse(const MLP& net, const std::vector<MatrixXd>& a, const VectorXd& a_bar_out,
                   ParamGradient& grad) {
  const int L = net.layer_count();
  MatrixXd ab = a_bar_out;
  for (int l = L - 1; l >= 0; --l) {
    MatrixXd pb = (l + 1 < L) ? MatrixXd((ab.array() * (1.0 - a[l + 1].array().square())).matrix())
                              : std::move(ab);
    grad.weights[l].noalias() += pb.transpose() * a[l];
    grad.biases[l].noalias() += pb.colwise().sum().transpose();
    if (l > 0) ab.noalias() = pb * net.weights[l];
  }
}

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct SplitBatch {
  Eigen::MatrixX2d interior, boundary;
};

SplitBatch split_by_tag(const TaggedPointSet& batch) {
  SplitBatch s;
  const long ni = batch.count(PointTag::Interior);
  const long nb = batch.size() - ni;
  s.interior.resize(ni, 2);
  s.boundary.resize(nb, 2);
  long ii = 0, ib = 0;
  for (long i = 0; i < batch.size(); ++i) {
    if (batch.tags[static_cast<size_t>(i)] == PointTag::Interior)
      s.interior.row(ii++) = batch.points.row(i);
    else
      s.boundary.row(ib++) = batch.points.row(i);
  }
  return s;
}

} // namespace

double loss_value(const MLP& net, const TaggedPointSet& batch,
                  const BVPSpec& spec, LossNorm norm) {
  if (batch.size() == 0) throw ConfigError("loss over an empty batch is undefined");
  tune_allocator_once();
  const SplitBatch s = split_by_tag(batch);
  double total = 0.0;
  if (s.interior.rows() > 0) {
    const BatchDerivatives d = forward_with_input_derivatives_batch(net, s.interior);
    const VectorXd res = d.laplacian() - source_term(s.interior, spec);
    total += norm == LossNorm::L2 ? res.squaredNorm() : res.lpNorm<1>();
  }
  if (s.boundary.rows() > 0) {
    const VectorXd u = forward_values(net, s.boundary);
    total += spec.eta * (norm == LossNorm::L2 ? u.squaredNorm() : u.lpNorm<1>());
  }
  return total / static_cast<double>(batch.size());
}

std::pair<double, ParamGradient> loss_param_gradient(const MLP& net,
                                                     const TaggedPointSet& batch,
                                                     const BVPSpec& spec,
                                                     LossNorm norm) {
  if (batch.size() == 0) throw ConfigError("loss over an empty batch is undefined");
  tune_allocator_once();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const SplitBatch s = split_by_tag(batch);
  ParamGradient grad = ParamGradient::zeros_like(net);
  double total = 0.0;

  if (s.interior.rows() > 0) {
    const ExtendedTape tape = extended_forward(net, s.interior);
    const int L = net.layer_count();
    const long n = tape.n;
    const VectorXd lap =
        tape.state[L].col(0).segment(3 * n, n) + tape.state[L].col(0).segment(4 * n, n);
    const VectorXd res = lap - source_term(s.interior, spec);
    VectorXd lap_bar(res.size());
    if (norm == LossNorm::L2) {
      total += res.squaredNorm();
      lap_bar = 2.0 * inv_n * res;
    } else {
      total += res.lpNorm<1>();
      lap_bar = inv_n * res.unaryExpr([](double v) { return sign0(v); });
    }
    const VectorXd zero = VectorXd::Zero(res.size());
    extended_reverse(net, tape, zero, lap_bar, lap_bar, grad);
  }

  if (s.boundary.rows() > 0) {
    const std::vector<MatrixXd> a = value_forward(net, s.boundary);
    const VectorXd u = a.back().col(0);
    VectorXd u_bar(u.size());
    if (norm == LossNorm::L2) {
      total += spec.eta * u.squaredNorm();
      u_bar = 2.0 * spec.eta * inv_n * u;
    } else {
      total += spec.eta * u.lpNorm<1>();
      u_bar = spec.eta * inv_n * u.unaryExpr([](double v) { return sign0(v); });
    }
    value_reverse(net, a, u_bar, grad);
  }

  return {total * inv_n, std::move(grad)};
}

} // namespace layergen
