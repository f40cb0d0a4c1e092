// SPDX-License-Identifier: Apache-2.0
#include "layergen/net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "layergen/textio.hpp"

#include "activation_math.hpp"

namespace layergen {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
  }
  throw ConfigError("unknown activation tag");
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  // Piecewise-linear activations (relu and friends) are rejected outright:
  // they have no second derivatives anywhere, so the PDE loss cannot see them.
  throw ConfigError("unsupported activation '" + s + "' (only tanh is smooth enough here)");
}

std::vector<int> MLP::widths() const {
  std::vector<int> w;
  w.push_back(input_dim);
  for (const auto& m : weights) w.push_back(static_cast<int>(m.rows()));
  return w;
}

void MLP::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw ConfigError("network input/output dimensions must be >= 1");
  if (weights.empty() || weights.size() != biases.size())
    throw ShapeError("network must have matching weight/bias layer lists");
  int fan_in = input_dim;
  for (size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    const auto& b = biases[l];
    if (w.rows() < 1)
      throw ConfigError("layer " + std::to_string(l + 1) + " has width < 1");
    if (w.cols() != fan_in)
      throw ShapeError("layer " + std::to_string(l + 1) + " fan-in " +
                       std::to_string(w.cols()) + " does not chain from " +
                       std::to_string(fan_in));
    if (b.size() != w.rows())
      throw ShapeError("layer " + std::to_string(l + 1) + " bias size mismatch");
    if (!w.allFinite() || !b.allFinite())
      throw NumericalError("layer " + std::to_string(l + 1) + " has non-finite parameters");
    fan_in = static_cast<int>(w.rows());
  }
  if (fan_in != output_dim)
    throw ShapeError("output layer width " + std::to_string(fan_in) +
                     " does not match output_dim " + std::to_string(output_dim));
}

bool MLP::equals(const MLP& other) const {
  if (input_dim != other.input_dim || output_dim != other.output_dim ||
      activation != other.activation || weights.size() != other.weights.size())
    return false;
  for (size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols())
      return false;
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

ParamGradient ParamGradient::zeros_like(const MLP& net) {
  ParamGradient g;
  g.weights.reserve(net.weights.size());
  g.biases.reserve(net.biases.size());
  for (size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.emplace_back(MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.emplace_back(VectorXd::Zero(net.biases[l].size()));
  }
  return g;
}

bool ParamGradient::congruent_with(const MLP& net) const {
  if (weights.size() != net.weights.size() || biases.size() != net.biases.size())
    return false;
  for (size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != net.weights[l].rows() ||
        weights[l].cols() != net.weights[l].cols() ||
        biases[l].size() != net.biases[l].size())
      return false;
  }
  return true;
}

bool ParamGradient::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

MLP glorot_init(const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw ConfigError("all layer widths must be >= 1");

  MLP net;
  net.input_dim = widths.front();
  net.output_dim = widths.back();
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)      // fixed draw order: row-major
      for (int j = 0; j < fan_in; ++j)
        w(i, j) = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(VectorXd::Zero(fan_out));
  }
  net.validate();
  return net;
}

namespace {

void check_points_finite(const Eigen::Ref<const Eigen::MatrixX2d>& points) {
  if (!points.allFinite())
    throw NumericalError("input points contain non-finite coordinates");
}

} // namespace

std::vector<MatrixXd> forward_activations(const MLP& net,
                                          const Eigen::Ref<const Eigen::MatrixX2d>& points) {
  net.validate();
  check_points_finite(points);
  std::vector<MatrixXd> acts;
  acts.reserve(net.weights.size());
  MatrixXd a = points;
  for (int l = 0; l < net.layer_count(); ++l) {
    MatrixXd z = (a * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
    if (l + 1 < net.layer_count())
      a = detail::tanh_activation(z.array()).matrix();
    else
      a = std::move(z); // linear readout
    acts.push_back(a);
  }
  return acts;
}

VectorXd forward_values(const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& points) {
  check_points_finite(points);
  MatrixXd a = points;
  for (int l = 0; l < net.layer_count(); ++l) {
    MatrixXd z = (a * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
    if (l + 1 < net.layer_count())
      a = detail::tanh_activation(z.array()).matrix();
    else
      a = std::move(z);
  }
  return a.col(0);
}

BatchDerivatives forward_with_input_derivatives_batch(
    const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& points) {
  check_points_finite(points);
  const long n = points.rows();

  // Rolling states: the activation and its first/pure-second input
  // derivatives, stacked as row blocks [a; gx; gy; sx; sy] so all five
  // streams share one weight multiplication per layer. See loss.cpp for the
  // taped variant of the same layout.
  MatrixXd s = MatrixXd::Zero(5 * n, 2);
  s.topRows(n) = points;
  s.block(n, 0, n, 1).setOnes();     // d a0 / dx
  s.block(2 * n, 1, n, 1).setOnes(); // d a0 / dy

  for (int l = 0; l < net.layer_count(); ++l) {
    const MatrixXd& w = net.weights[l];
    MatrixXd z;
    z.noalias() = s * w.transpose();
    z.topRows(n).rowwise() += net.biases[l].transpose();
    if (l + 1 < net.layer_count()) {
      const Eigen::ArrayXXd t = detail::tanh_activation(z.topRows(n).array());
      const Eigen::ArrayXXd p1 = 1.0 - t.square(); // phi'
      const Eigen::ArrayXXd p2 = -2.0 * t * p1;    // phi''
      const auto dxm = z.middleRows(n, n).array();
      const auto dym = z.middleRows(2 * n, n).array();
      const auto exm = z.middleRows(3 * n, n).array();
      const auto eym = z.middleRows(4 * n, n).array();
      MatrixXd next(5 * n, w.rows());
      next.topRows(n) = t.matrix();
      next.middleRows(n, n) = (p1 * dxm).matrix();
      next.middleRows(2 * n, n) = (p1 * dym).matrix();
      next.middleRows(3 * n, n) = (p2 * dxm.square() + p1 * exm).matrix();
      next.middleRows(4 * n, n) = (p2 * dym.square() + p1 * eym).matrix();
      s = std::move(next);
    } else {
      s = std::move(z);
    }
  }

  BatchDerivatives out;
  out.value = s.col(0).head(n);
  out.grad_x = s.col(0).segment(n, n);
  out.grad_y = s.col(0).segment(2 * n, n);
  out.second_x = s.col(0).segment(3 * n, n);
  out.second_y = s.col(0).segment(4 * n, n);
  return out;
}

DerivativeBundle forward_with_input_derivatives(const MLP& net, const Vector2d& point) {
  Eigen::MatrixX2d p(1, 2);
  p.row(0) = point.transpose();
  BatchDerivatives b = forward_with_input_derivatives_batch(net, p);
  DerivativeBundle out;
  out.value = b.value[0];
  out.input_gradient = Vector2d(b.grad_x[0], b.grad_y[0]);
  out.input_pure_second = Vector2d(b.second_x[0], b.second_y[0]);
  return out;
}

// --- checkpoint files -----------------------------------------------------

namespace {
constexpr const char* kMagic = "LAYERGEN-CHECKPOINT";
constexpr int kVersion = 1;
} // namespace

void checkpoint_write(const MLP& net, const CheckpointMeta& meta,
                      const std::filesystem::path& path) {
  net.validate();
  std::ostringstream os;
  os << kMagic << "\n";
  os << "version=" << kVersion << "\n";
  os << "widths=";
  const auto ws = net.widths();
  for (size_t i = 0; i < ws.size(); ++i) os << (i ? " " : "") << ws[i];
  os << "\n";
  os << "activation=" << to_string(net.activation) << "\n";
  os << "seed=" << meta.seed << "\n";
  for (const auto& [k, v] : meta.extra) os << "meta." << k << "=" << v << "\n";
  for (int l = 0; l < net.layer_count(); ++l) {
    const MatrixXd& w = net.weights[l];
    os << "W" << (l + 1) << " " << w.rows() << " " << w.cols() << "\n";
    for (long i = 0; i < w.rows(); ++i) {
      for (long j = 0; j < w.cols(); ++j) os << (j ? " " : "") << format_exact(w(i, j));
      os << "\n";
    }
    const VectorXd& b = net.biases[l];
    os << "b" << (l + 1) << " " << b.size() << "\n";
    for (long i = 0; i < b.size(); ++i) os << format_exact(b[i]) << "\n";
  }
  os << "END\n";
  atomic_write(path, os.str());
}

namespace {

struct LineReader {
  std::istringstream in;
  std::string name;
  long lineno = 0;

  LineReader(std::string content, std::string n) : in(std::move(content)), name(std::move(n)) {}

  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  }
  std::string require(const std::string& what) {
    std::string line;
    if (!next(line))
      throw ParseError(name + ": truncated file, missing " + what);
    return line;
  }
};

std::pair<std::string, std::string> split_kv(const std::string& line, const std::string& ctx) {
  auto pos = line.find('=');
  if (pos == std::string::npos) throw ParseError(ctx + ": expected key=value, got '" + line + "'");
  return {line.substr(0, pos), line.substr(pos + 1)};
}

} // namespace

Checkpoint checkpoint_read(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw MissingInputError("checkpoint not found: " + path.string());
  LineReader r(read_file(path), path.filename().string());

  if (r.require("magic line") != kMagic)
    throw ParseError(r.name + ": not a checkpoint file (bad magic line)");
  {
    auto [k, v] = split_kv(r.require("version line"), r.name);
    if (k != "version") throw ParseError(r.name + ": missing version line");
    if (parse_long(v, "version") != kVersion)
      throw VersionError(r.name + ": unsupported checkpoint version " + v);
  }

  std::vector<int> widths;
  {
    auto [k, v] = split_kv(r.require("widths line"), r.name);
    if (k != "widths") throw ParseError(r.name + ": missing widths line");
    for (const auto& tok : split_ws(v))
      widths.push_back(static_cast<int>(parse_long(tok, "width")));
    if (widths.size() < 2) throw ParseError(r.name + ": widths line needs >= 2 entries");
  }

  Checkpoint cp;
  {
    auto [k, v] = split_kv(r.require("activation line"), r.name);
    if (k != "activation") throw ParseError(r.name + ": missing activation line");
    cp.net.activation = activation_from_string(v);
  }
  {
    auto [k, v] = split_kv(r.require("seed line"), r.name);
    if (k != "seed") throw ParseError(r.name + ": missing seed line");
    cp.meta.seed = parse_u64(v, "seed");
  }

  cp.net.input_dim = widths.front();
  cp.net.output_dim = widths.back();

  std::string line = r.require("meta or W1 block");
  while (line.rfind("meta.", 0) == 0) {
    auto [k, v] = split_kv(line, r.name);
    cp.meta.extra[k.substr(5)] = v;
    line = r.require("W1 block");
  }

  const int layers = static_cast<int>(widths.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const std::string wtag = "W" + std::to_string(l + 1);
    auto head = split_ws(line);
    if (head.size() != 3 || head[0] != wtag)
      throw ParseError(r.name + ": missing section " + wtag);
    const long rows = parse_long(head[1], wtag + " rows");
    const long cols = parse_long(head[2], wtag + " cols");
    if (rows != widths[l + 1] || cols != widths[l])
      throw ShapeError(r.name + ": " + wtag + " declared " + std::to_string(rows) + "x" +
                       std::to_string(cols) + " but widths imply " +
                       std::to_string(widths[l + 1]) + "x" + std::to_string(widths[l]));
    MatrixXd w(rows, cols);
    for (long i = 0; i < rows; ++i) {
      auto vals = split_ws(r.require(wtag + " row " + std::to_string(i + 1)));
      if (static_cast<long>(vals.size()) != cols)
        throw ShapeError(r.name + ": " + wtag + " row " + std::to_string(i + 1) + " has " +
                         std::to_string(vals.size()) + " values, expected " + std::to_string(cols));
      for (long j = 0; j < cols; ++j) w(i, j) = parse_double(vals[j], wtag);
    }
    cp.net.weights.push_back(std::move(w));

    const std::string btag = "b" + std::to_string(l + 1);
    auto bhead = split_ws(r.require("section " + btag));
    if (bhead.size() != 2 || bhead[0] != btag)
      throw ParseError(r.name + ": missing section " + btag);
    const long size = parse_long(bhead[1], btag + " size");
    if (size != widths[l + 1])
      throw ShapeError(r.name + ": " + btag + " declared size " + std::to_string(size) +
                       " but widths imply " + std::to_string(widths[l + 1]));
    VectorXd b(size);
    for (long i = 0; i < size; ++i)
      b[i] = parse_double(r.require(btag + " entry " + std::to_string(i + 1)), btag);
    cp.net.biases.push_back(std::move(b));

    if (l + 1 < layers) line = r.require("section W" + std::to_string(l + 2));
  }

  if (r.require("END marker") != "END")
    throw ParseError(r.name + ": missing END marker");

  cp.net.validate();
  return cp;
}

} // namespace layergen
