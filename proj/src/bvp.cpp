// SPDX-License-Identifier: Apache-2.0
#include "layergen/bvp.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <numbers>
#include <sstream>

#include "layergen/textio.hpp"

namespace layergen {

void BVPSpec::validate() const {
  if (!(r > 0.0)) throw ConfigError("source width r must be > 0");
  if (!(eta >= 0.0)) throw ConfigError("boundary weight eta must be >= 0");
  if (!(domain.x0 < domain.x1 && domain.y0 < domain.y1))
    throw ConfigError("domain rectangle is degenerate");
  if (!domain.strictly_inside(x_source, y_source))
    throw ConfigError("source center must lie inside the domain");
}

double source_term(double x, double y, const BVPSpec& spec) {
  const double dx = x - spec.x_source;
  const double dy = y - spec.y_source;
  const double two_r2 = 2.0 * spec.r * spec.r;
  return -std::exp(-(dx * dx + dy * dy) / two_r2) / (std::numbers::pi * two_r2);
}

VectorXd source_term(const Eigen::Ref<const Eigen::MatrixX2d>& points, const BVPSpec& spec) {
  const double two_r2 = 2.0 * spec.r * spec.r;
  Eigen::ArrayXd d2 = (points.col(0).array() - spec.x_source).square() +
                      (points.col(1).array() - spec.y_source).square();
  return (-(-d2 / two_r2).exp() / (std::numbers::pi * two_r2)).matrix();
}

std::string to_string(LossNorm n) { return n == LossNorm::L2 ? "L2" : "L1"; }

LossNorm loss_norm_from_string(const std::string& s) {
  if (s == "L2" || s == "l2") return LossNorm::L2;
  if (s == "L1" || s == "l1") return LossNorm::L1;
  throw ConfigError("unknown loss norm '" + s + "' (expected L1 or L2)");
}

long TaggedPointSet::count(PointTag t) const {
  long c = 0;
  for (auto tag : tags)
    if (tag == t) ++c;
  return c;
}

void TaggedPointSet::validate(const Rect& domain) const {
  if (points.rows() != static_cast<long>(tags.size()))
    throw ShapeError("point/tag count mismatch");
  for (long i = 0; i < points.rows(); ++i) {
    const double x = points(i, 0), y = points(i, 1);
    if (tags[i] == PointTag::Interior && !domain.strictly_inside(x, y))
      throw ConfigError("interior-tagged point lies on or outside the boundary");
    if (tags[i] == PointTag::Boundary && !domain.on_boundary(x, y))
      throw ConfigError("boundary-tagged point is not exactly on the boundary");
  }
}

double pointwise_loss(const DerivativeBundle& bundle, const Vector2d& p,
                      PointTag tag, const BVPSpec& spec, LossNorm norm) {
  if (tag == PointTag::Interior) {
    const double res = bundle.laplacian() - source_term(p.x(), p.y(), spec);
    return norm == LossNorm::L2 ? res * res : std::abs(res);
  }
  const double u = bundle.value;
  return spec.eta * (norm == LossNorm::L2 ? u * u : std::abs(u));
}

TaggedPointSet sample_training_set(Rng& rng, const BVPSpec& spec,
                                   long n_interior, long n_per_edge) {
  if (n_interior < 0 || n_per_edge < 0) throw ConfigError("sampling counts must be >= 0");
  const Rect& d = spec.domain;
  TaggedPointSet set;
  set.points.resize(n_interior + 4 * n_per_edge, 2);
  set.tags.assign(static_cast<size_t>(set.points.rows()), PointTag::Interior);

  std::uniform_real_distribution<double> ux(d.x0, d.x1);
  std::uniform_real_distribution<double> uy(d.y0, d.y1);
  long row = 0;
  for (long i = 0; i < n_interior; ++i) {
    double x, y;
    do {
      x = ux(rng);
      y = uy(rng);
    } while (!d.strictly_inside(x, y)); // open rectangle; rejection is a measure-zero event
    set.points(row, 0) = x;
    set.points(row, 1) = y;
    ++row;
  }

  // Half-open edges, one corner each: bottom->(x0,y0), right->(x1,y0),
  // top->(x1,y1), left->(x0,y1).
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double wx = d.x1 - d.x0, wy = d.y1 - d.y0;
  for (int edge = 0; edge < 4; ++edge) {
    for (long i = 0; i < n_per_edge; ++i) {
      const double t = unit(rng);
      double x, y;
      switch (edge) {
        case 0: x = d.x0 + t * wx; y = d.y0; break;
        case 1: x = d.x1; y = d.y0 + t * wy; break;
        case 2: x = d.x1 - t * wx; y = d.y1; break;
        default: x = d.x0; y = d.y1 - t * wy; break;
      }
      set.points(row, 0) = x;
      set.points(row, 1) = y;
      set.tags[static_cast<size_t>(row)] = PointTag::Boundary;
      ++row;
    }
  }
  return set;
}

TaggedPointSet sample_test_set(Rng& rng, const BVPSpec& spec,
                               long n_interior, long n_per_edge, long scale) {
  if (scale < 1) throw ConfigError("test-set scale must be >= 1");
  return sample_training_set(rng, spec, n_interior * scale, n_per_edge * scale);
}

void GridField::validate() const {
  if (nx < 2 || ny < 2) throw ConfigError("grid resolution must be >= 2 per axis");
  if (values.size() != static_cast<long>(nx) * ny)
    throw ShapeError("grid value count does not match resolution");
  if (!values.allFinite()) throw NumericalError("grid holds non-finite values");
}

GridField fd_solve(const std::function<double(double, double)>& source, const Rect& d,
                   int n) {
  if (n < 3) throw ConfigError("fd_solve needs n >= 3");

  const double hx = (d.x1 - d.x0) / (n - 1);
  const double hy = (d.y1 - d.y0) / (n - 1);
  const int m = n - 2; // interior nodes per axis
  const long unknowns = static_cast<long>(m) * m;

  // -lap u = -s assembled as an SPD system.
  const double cx = 1.0 / (hx * hx), cy = 1.0 / (hy * hy);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(unknowns * 5);
  VectorXd rhs(unknowns);
  for (int iy = 0; iy < m; ++iy) {
    for (int ix = 0; ix < m; ++ix) {
      const long k = static_cast<long>(iy) * m + ix;
      trip.emplace_back(k, k, 2.0 * (cx + cy));
      if (ix > 0) trip.emplace_back(k, k - 1, -cx);
      if (ix < m - 1) trip.emplace_back(k, k + 1, -cx);
      if (iy > 0) trip.emplace_back(k, k - m, -cy);
      if (iy < m - 1) trip.emplace_back(k, k + m, -cy);
      const double x = d.x0 + (ix + 1) * hx;
      const double y = d.y0 + (iy + 1) * hy;
      rhs[k] = -source(x, y);
    }
  }
  Eigen::SparseMatrix<double> A(unknowns, unknowns);
  A.setFromTriplets(trip.begin(), trip.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
  if (solver.info() != Eigen::Success)
    throw NumericalError("fd_solve: factorization failed");
  VectorXd u = solver.solve(rhs);
  if (solver.info() != Eigen::Success)
    throw NumericalError("fd_solve: back substitution failed");

  const double res = (A * u - rhs).norm() / std::max(1.0, rhs.norm());
  if (!(res < 1e-10))
    throw NumericalError("fd_solve: relative residual " + format_exact(res) +
                         " exceeds 1e-10");

  GridField field;
  field.nx = n;
  field.ny = n;
  field.domain = d;
  field.values = VectorXd::Zero(static_cast<long>(n) * n);
  for (int iy = 0; iy < m; ++iy)
    for (int ix = 0; ix < m; ++ix)
      field.values[static_cast<long>(iy + 1) * n + (ix + 1)] = u[static_cast<long>(iy) * m + ix];
  return field;
}

GridField fd_solve(const BVPSpec& spec, int n) {
  spec.validate();
  return fd_solve([&spec](double x, double y) { return source_term(x, y, spec); },
                  spec.domain, n);
}

double stencil_residual(const GridField& f, const BVPSpec& spec) {
  f.validate();
  const double hx = (f.domain.x1 - f.domain.x0) / (f.nx - 1);
  const double hy = (f.domain.y1 - f.domain.y0) / (f.ny - 1);
  double worst = 0.0;
  for (int iy = 1; iy + 1 < f.ny; ++iy) {
    for (int ix = 1; ix + 1 < f.nx; ++ix) {
      const double lap = (f.at(ix - 1, iy) - 2 * f.at(ix, iy) + f.at(ix + 1, iy)) / (hx * hx) +
                         (f.at(ix, iy - 1) - 2 * f.at(ix, iy) + f.at(ix, iy + 1)) / (hy * hy);
      const double s = source_term(f.x_of(ix), f.y_of(iy), spec);
      worst = std::max(worst, std::abs(lap - s));
    }
  }
  return worst;
}

double relative_l2_error(const MLP& net, const GridField& oracle) {
  oracle.validate();
  const long n = static_cast<long>(oracle.nx) * oracle.ny;
  Eigen::MatrixX2d pts(n, 2);
  for (int iy = 0; iy < oracle.ny; ++iy)
    for (int ix = 0; ix < oracle.nx; ++ix) {
      const long k = static_cast<long>(iy) * oracle.nx + ix;
      pts(k, 0) = oracle.x_of(ix);
      pts(k, 1) = oracle.y_of(iy);
    }
  const VectorXd u = forward_values(net, pts);
  const double denom = oracle.values.norm();
  if (denom == 0.0) throw NumericalError("relative_l2_error: oracle field is identically zero");
  return (u - oracle.values).norm() / denom;
}

// --- GridField files -------------------------------------------------------

void grid_write_text(const GridField& field, const std::filesystem::path& path) {
  field.validate();
  std::ostringstream os;
  os << field.nx << " " << field.ny << " " << format_exact(field.domain.x0) << " "
     << format_exact(field.domain.x1) << " " << format_exact(field.domain.y0) << " "
     << format_exact(field.domain.y1) << "\n";
  for (long i = 0; i < field.values.size(); ++i) os << format_exact(field.values[i]) << "\n";
  atomic_write(path, os.str());
}

GridField grid_read_text(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty grid file");
  auto head = split_ws(line);
  if (head.size() != 6) throw ParseError(path.string() + ": bad grid header");
  GridField f;
  f.nx = static_cast<int>(parse_long(head[0], "nx"));
  f.ny = static_cast<int>(parse_long(head[1], "ny"));
  f.domain.x0 = parse_double(head[2], "x0");
  f.domain.x1 = parse_double(head[3], "x1");
  f.domain.y0 = parse_double(head[4], "y0");
  f.domain.y1 = parse_double(head[5], "y1");
  if (f.nx < 2 || f.ny < 2) throw ParseError(path.string() + ": bad grid resolution");
  const long count = static_cast<long>(f.nx) * f.ny;
  f.values.resize(count);
  for (long i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      throw ParseError(path.string() + ": truncated grid data at value " + std::to_string(i + 1));
    f.values[i] = parse_double(line, "grid value");
  }
  f.validate();
  return f;
}

void grid_write_pgm(const GridField& field, const std::filesystem::path& path) {
  field.validate();
  const double lo = field.values.minCoeff();
  const double hi = field.values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;

  std::ostringstream os;
  os << "P5\n" << field.nx << " " << field.ny << "\n255\n";
  // scanlines top-to-bottom: flip y so the image reads like a plot
  for (int iy = field.ny - 1; iy >= 0; --iy)
    for (int ix = 0; ix < field.nx; ++ix) {
      const double t = (field.at(ix, iy) - lo) / span;
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
    }
  atomic_write(path, os.str());

  std::ostringstream meta;
  meta << "min=" << format_exact(lo) << "\nmax=" << format_exact(hi) << "\n";
  atomic_write(path.string() + ".meta", meta.str());
}

GridField grid_read_pgm(const std::filesystem::path& path, const Rect& domain) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  int nx = 0, ny = 0, maxval = 0;
  in >> magic >> nx >> ny >> maxval;
  if (magic != "P5" || !in) throw ParseError(path.string() + ": not a binary PGM");
  if (maxval != 255) throw ParseError(path.string() + ": expected 8-bit PGM");
  if (nx < 1 || ny < 1) throw ParseError(path.string() + ": bad dimensions");
  in.get(); // the single whitespace byte after the header
  const long expected = static_cast<long>(nx) * ny;
  const long offset = static_cast<long>(in.tellg());
  if (offset < 0 || static_cast<long>(bytes.size()) - offset < expected)
    throw ParseError(path.string() + ": truncated pixel data");

  double lo = 0.0, hi = 0.0;
  {
    std::istringstream meta(read_file(path.string() + ".meta"));
    std::string line;
    while (std::getline(meta, line)) {
      if (line.rfind("min=", 0) == 0) lo = parse_double(line.substr(4), "pgm meta min");
      if (line.rfind("max=", 0) == 0) hi = parse_double(line.substr(4), "pgm meta max");
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;

  GridField field;
  field.nx = nx;
  field.ny = ny;
  field.domain = domain;
  field.values.resize(expected);
  for (int row = 0; row < ny; ++row) {
    const int iy = ny - 1 - row; // writer flips scanlines
    for (int ix = 0; ix < nx; ++ix) {
      const auto byte = static_cast<unsigned char>(bytes[static_cast<size_t>(offset + static_cast<long>(row) * nx + ix)]);
      field.values[static_cast<long>(iy) * nx + ix] = lo + byte / 255.0 * span;
    }
  }
  return field;
}

} // namespace layergen
