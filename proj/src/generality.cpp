// SPDX-License-Identifier: Apache-2.0
#include "layergen/generality.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "layergen/textio.hpp"

namespace layergen {

long EnsembleIndex::positions() const {
  long p = 0;
  long last = 0;
  bool first = true;
  for (const auto& m : members) {
    if (first || m.x_deci != last) ++p;
    last = m.x_deci;
    first = false;
  }
  return p;
}

long EnsembleIndex::seeds_per_position() const {
  if (members.empty()) return 0;
  return size() / positions();
}

long EnsembleIndex::position_step() const {
  const long s = seeds_per_position();
  if (positions() < 2) return 0;
  return members[static_cast<size_t>(s)].x_deci - members[0].x_deci;
}

void EnsembleIndex::validate() const {
  if (members.empty()) throw ConfigError("ensemble index is empty");
  if (width < 1 || depth < 1) throw ConfigError("ensemble architecture unset");

  // Contiguous x' blocks of one uniform size, positions strictly increasing
  // and uniformly spaced: the decomposition below relies on all three.
  std::vector<long> block_starts;
  for (size_t i = 0; i < members.size(); ++i)
    if (i == 0 || members[i].x_deci != members[i - 1].x_deci) block_starts.push_back(static_cast<long>(i));
  block_starts.push_back(size());
  const long s = block_starts[1] - block_starts[0];
  for (size_t b = 0; b + 1 < block_starts.size(); ++b) {
    if (block_starts[b + 1] - block_starts[b] != s)
      throw ConfigError("ensemble blocks differ in seed count");
    // a (position x seed) grid: every block carries the same seed sequence
    for (long i = 0; i < block_starts[b + 1] - block_starts[b]; ++i)
      if (members[static_cast<size_t>(block_starts[b] + i)].seed_id !=
          members[static_cast<size_t>(i)].seed_id)
        throw ConfigError("ensemble blocks disagree on seed ids");
    if (b + 2 < block_starts.size()) {
      const long x0 = members[static_cast<size_t>(block_starts[b])].x_deci;
      const long x1 = members[static_cast<size_t>(block_starts[b + 1])].x_deci;
      if (x1 <= x0) throw ConfigError("ensemble positions must increase");
      if (b > 0) {
        const long xm = members[static_cast<size_t>(block_starts[b - 1])].x_deci;
        if (x1 - x0 != x0 - xm) throw ConfigError("ensemble positions must be uniformly spaced");
      }
    }
  }
}

void SimilarityMatrix::validate() const {
  index.validate();
  if (m.rows() != m.cols() || m.rows() != index.size())
    throw ShapeError("similarity matrix does not match its ensemble index");
  if (m.minCoeff() < 0.0) throw NumericalError("similarity entries must be nonnegative");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw NumericalError("similarity matrix asymmetry exceeds 1e-8");
}

SimilarityMatrix build_similarity_matrix(const std::vector<MLP>& nets,
                                         const EnsembleIndex& index, int layer,
                                         const SampleGrid& grid,
                                         std::optional<double> variance_threshold) {
  index.validate();
  if (static_cast<long>(nets.size()) != index.size())
    throw ShapeError("one network per ensemble member expected");
  std::vector<ActivationMatrix> acts;
  acts.reserve(nets.size());
  for (size_t i = 0; i < nets.size(); ++i) {
    const MLP& net = nets[i];
    if (net.depth() != index.depth)
      throw ShapeError("ensemble member depth mismatch");
    for (int l = 1; l <= net.depth(); ++l)
      if (net.widths()[static_cast<size_t>(l)] != index.width)
        throw ShapeError("ensemble member width mismatch");
    ActivationMatrix a = sample_activations(net, layer, grid);
    a.x_deci = index.members[i].x_deci;
    a.seed_id = index.members[i].seed_id;
    acts.push_back(std::move(a));
  }

  SimilarityMatrix out;
  out.index = index;
  out.layer = layer;
  out.m.resize(index.size(), index.size());
  for (long i = 0; i < index.size(); ++i) {
    out.m(i, i) = self_similarity(acts[static_cast<size_t>(i)]);
    for (long j = i + 1; j < index.size(); ++j) {
      const double rho = svcca_similarity(acts[static_cast<size_t>(i)],
                                          acts[static_cast<size_t>(j)], variance_threshold);
      out.m(i, j) = rho;
      out.m(j, i) = rho;
    }
  }
  out.validate();
  return out;
}

GroupStats GroupStats::from(const std::vector<double>& xs) {
  GroupStats g;
  g.count = static_cast<long>(xs.size());
  if (xs.empty()) return g;
  g.min_v = g.max_v = xs[0];
  double sum = 0.0;
  for (double x : xs) {
    sum += x;
    g.min_v = std::min(g.min_v, x);
    g.max_v = std::max(g.max_v, x);
  }
  g.mean = sum / static_cast<double>(g.count);
  if (g.count > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - g.mean) * (x - g.mean);
    g.variance = ss / static_cast<double>(g.count - 1);
  }
  return g;
}

LayerStats decompose(const SimilarityMatrix& matrix) {
  matrix.validate();
  const EnsembleIndex& idx = matrix.index;
  LayerStats out;
  out.layer = matrix.layer;

  std::vector<double> self, same;
  std::map<long, std::vector<double>> cross; // delta deci -> entries
  for (long i = 0; i < idx.size(); ++i) {
    self.push_back(matrix.m(i, i));
    for (long j = i + 1; j < idx.size(); ++j) {
      const long delta =
          std::labs(idx.members[static_cast<size_t>(j)].x_deci -
                    idx.members[static_cast<size_t>(i)].x_deci);
      if (delta == 0)
        same.push_back(matrix.m(i, j));
      else
        cross[delta].push_back(matrix.m(i, j));
    }
  }
  out.self_group = GroupStats::from(self);
  out.same_task = GroupStats::from(same);
  for (const auto& [delta, xs] : cross) out.cross.emplace_back(delta, GroupStats::from(xs));
  return out;
}

MetricValue reproducibility(const LayerStats& stats) {
  if (stats.same_task.count < 1)
    throw ConfigError("reproducibility needs at least two seeds per position");
  const double num = stats.same_task.mean;
  const double den = stats.self_group.mean;
  if (!(den > 0.0)) throw NumericalError("self-similarity mean is not positive");
  MetricValue out;
  out.value = num / den;
  const double rel_var = stats.same_task.variance_of_mean() / (num * num) +
                         stats.self_group.variance_of_mean() / (den * den);
  out.uncertainty = std::abs(out.value) * std::sqrt(rel_var);
  return out;
}

MetricValue specificity(const LayerStats& stats) {
  if (stats.cross.empty())
    throw ConfigError("specificity needs at least one dx' > 0 group");
  if (stats.same_task.count < 1)
    throw ConfigError("specificity needs same-task pairs");
  const double m0 = stats.same_task.mean;
  if (!(m0 > 0.0)) throw NumericalError("same-task similarity mean is not positive");

  const double k = static_cast<double>(stats.cross.size());
  double value = 0.0;
  double var = 0.0;
  double d_m0 = 0.0; // accumulated d(value)/d(m0)
  for (const auto& [delta, g] : stats.cross) {
    const double diff = m0 - g.mean;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    value += std::abs(diff) / m0;
    // d|m0-mk|/m0 / dmk = -sign/m0 ; d/dm0 = sign*mk/m0^2
    var += g.variance_of_mean() / (m0 * m0);
    d_m0 += sign * g.mean / (m0 * m0);
  }
  value /= k;
  var /= k * k;
  var += (d_m0 / k) * (d_m0 / k) * stats.same_task.variance_of_mean();
  return {value, std::sqrt(var)};
}

// --- report emission --------------------------------------------------------

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "width,layer,dim_mean,dim_min,dim_max,reproducibility,reproducibility_unc,"
        "specificity,specificity_unc\n";
  for (const auto& r : rows)
    os << r.width << "," << r.layer << "," << format_fixed(r.dimensionality.mean) << ","
       << format_fixed(r.dimensionality.min_v) << "," << format_fixed(r.dimensionality.max_v)
       << "," << format_fixed(r.repro.value) << "," << format_fixed(r.repro.uncertainty) << ","
       << format_fixed(r.spec.value) << "," << format_fixed(r.spec.uncertainty) << "\n";
  return os.str();
}

std::string layer_stats_csv(int width, const std::vector<LayerStats>& layers) {
  std::ostringstream os;
  os << "width,layer,group,delta,count,mean,variance,min,max\n";
  auto row = [&](int layer, const std::string& group, long delta, const GroupStats& g) {
    os << width << "," << layer << "," << group << ","
       << (delta < 0 ? std::string("") : format_deci(delta)) << "," << g.count << ","
       << format_fixed(g.mean) << "," << format_fixed(g.variance) << ","
       << format_fixed(g.min_v) << "," << format_fixed(g.max_v) << "\n";
  };
  for (const auto& s : layers) {
    row(s.layer, "self", -1, s.self_group);
    row(s.layer, "same_task", 0, s.same_task);
    for (const auto& [delta, g] : s.cross) row(s.layer, "cross_task", delta, g);
  }
  return os.str();
}

void similarity_write_text(const SimilarityMatrix& matrix, const std::filesystem::path& path) {
  matrix.validate();
  std::ostringstream os;
  os << "LAYERGEN-SIMILARITY\n";
  os << "version=1\n";
  os << "layer=" << matrix.layer << "\n";
  os << "width=" << matrix.index.width << "\n";
  os << "depth=" << matrix.index.depth << "\n";
  os << "members=" << matrix.index.size() << "\n";
  for (const auto& m : matrix.index.members) os << m.x_deci << " " << m.seed_id << "\n";
  os << "matrix\n";
  for (long i = 0; i < matrix.m.rows(); ++i) {
    for (long j = 0; j < matrix.m.cols(); ++j)
      os << (j ? " " : "") << format_exact(matrix.m(i, j));
    os << "\n";
  }
  os << "END\n";
  atomic_write(path, os.str());
}

SimilarityMatrix similarity_read_text(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  auto require = [&](const std::string& what) {
    if (!std::getline(in, line))
      throw ParseError(path.string() + ": truncated file, missing " + what);
    return line;
  };
  auto keyed = [&](const std::string& key) {
    const std::string l = require(key);
    if (l.rfind(key + "=", 0) != 0)
      throw ParseError(path.string() + ": expected '" + key + "=', got '" + l + "'");
    return l.substr(key.size() + 1);
  };
  if (require("magic line") != "LAYERGEN-SIMILARITY")
    throw ParseError(path.string() + ": not a similarity matrix file");
  if (parse_long(keyed("version"), "version") != 1)
    throw VersionError(path.string() + ": unsupported similarity file version");
  SimilarityMatrix out;
  out.layer = static_cast<int>(parse_long(keyed("layer"), "layer"));
  out.index.width = static_cast<int>(parse_long(keyed("width"), "width"));
  out.index.depth = static_cast<int>(parse_long(keyed("depth"), "depth"));
  const long n = parse_long(keyed("members"), "members");
  for (long i = 0; i < n; ++i) {
    const auto parts = split_ws(require("member line"));
    if (parts.size() != 2) throw ParseError(path.string() + ": malformed member line");
    out.index.members.push_back(
        {parse_long(parts[0], "member x'"), parse_long(parts[1], "member seed")});
  }
  if (require("matrix marker") != "matrix")
    throw ParseError(path.string() + ": missing matrix marker");
  out.m.resize(n, n);
  for (long i = 0; i < n; ++i) {
    const auto parts = split_ws(require("matrix row"));
    if (static_cast<long>(parts.size()) != n)
      throw ParseError(path.string() + ": matrix row has wrong length");
    for (long j = 0; j < n; ++j) out.m(i, j) = parse_double(parts[static_cast<size_t>(j)], "matrix entry");
  }
  if (require("END marker") != "END") throw ParseError(path.string() + ": missing END marker");
  out.validate();
  return out;
}

std::string similarity_csv(const SimilarityMatrix& matrix) {
  matrix.validate();
  std::ostringstream os;
  os << "layer," << matrix.layer << "\n";
  os << "x_seed";
  for (const auto& m : matrix.index.members)
    os << "," << format_deci(m.x_deci) << "/" << m.seed_id;
  os << "\n";
  for (long i = 0; i < matrix.index.size(); ++i) {
    const auto& m = matrix.index.members[static_cast<size_t>(i)];
    os << format_deci(m.x_deci) << "/" << m.seed_id;
    for (long j = 0; j < matrix.index.size(); ++j) os << "," << format_fixed(matrix.m(i, j));
    os << "\n";
  }
  return os.str();
}

} // namespace layergen
