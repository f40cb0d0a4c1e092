// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "layergen/errors.hpp"
#include "layergen/net.hpp"
#include "layergen/textio.hpp"

using namespace layergen;
namespace fs = std::filesystem;

namespace {

MLP random_net(const std::vector<int>& widths, std::uint64_t seed) {
  Rng rng = substream(seed, 0);
  return glorot_init(widths, rng);
}

} // namespace

TEST_SUITE_BEGIN("net");

TEST_CASE("glorot_init shapes, bounds and zero biases") {
  MLP net = random_net({2, 20, 20, 1}, 5);
  CHECK(net.widths() == std::vector<int>{2, 20, 20, 1});
  CHECK(net.depth() == 2);
  CHECK(net.layer_count() == 3);
  net.validate();

  // L = sqrt(6 / (fan_in + fan_out)); first layer: sqrt(6/22)
  const double limit = 0.52223296786709351453;
  CHECK(net.weights[0].rows() == 20);
  CHECK(net.weights[0].cols() == 2);
  CHECK(net.weights[0].maxCoeff() <= limit);
  CHECK(net.weights[0].minCoeff() >= -limit);
  for (const auto& b : net.biases) CHECK(b.isZero(0.0));

  // a wide layer fills the admissible interval reasonably densely
  CHECK(net.weights[1].maxCoeff() > 0.5 * 0.39);  // L(20,20) = sqrt(6/40) ~ 0.387
  CHECK(net.weights[1].minCoeff() < -0.5 * 0.39);
}

TEST_CASE("initialization is deterministic in the seed") {
  MLP a = random_net({2, 8, 1}, 11);
  MLP b = random_net({2, 8, 1}, 11);
  MLP c = random_net({2, 8, 1}, 12);
  CHECK(a.equals(b));
  CHECK_FALSE(a.equals(c));
}

TEST_CASE("validate rejects malformed networks") {
  MLP net = random_net({2, 4, 1}, 1);
  MLP bad = net;
  bad.weights[1].resize(1, 7); // fan-in mismatch with previous layer
  CHECK_THROWS_AS(bad.validate(), ShapeError);

  bad = net;
  bad.biases[0].resize(3);
  CHECK_THROWS_AS(bad.validate(), ShapeError);

  bad = net;
  bad.weights.clear();
  bad.biases.clear();
  CHECK_THROWS_AS(bad.validate(), ShapeError);

  Rng rng(1);
  CHECK_THROWS_AS(glorot_init({2}, rng), ConfigError);
  CHECK_THROWS_AS(glorot_init({2, 0, 1}, rng), ConfigError);
}

TEST_CASE("forward pass: tanh network evaluates as composed") {
  // single hidden unit, hand-checkable: u = w2 * tanh(w1 . x + b1) + b2
  MLP net;
  net.input_dim = 2;
  net.output_dim = 1;
  net.weights = {MatrixXd(1, 2), MatrixXd(1, 1)};
  net.biases = {VectorXd(1), VectorXd(1)};
  net.weights[0] << 0.25, 0.5;
  net.biases[0] << 0.125;
  net.weights[1] << 2.0;
  net.biases[1] << -0.0625;
  net.validate();

  Eigen::MatrixX2d pts(1, 2);
  pts << 0.5, 0.5;
  const double pre = 0.25 * 0.5 + 0.5 * 0.5 + 0.125; // = 0.5
  const double expected = 2.0 * 0.4621171572600097585 - 0.0625; // tanh(0.5) frozen
  const VectorXd out = forward_values(net, pts);
  CHECK(out[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(std::tanh(pre) == doctest::Approx(0.4621171572600097585).epsilon(1e-16));
}

TEST_CASE("forward_activations exposes every hidden layer plus the output") {
  MLP net = random_net({2, 5, 7, 1}, 3);
  Eigen::MatrixX2d pts(4, 2);
  pts << 0, 0, 0.1, -0.2, -0.9, 0.9, 1, -1;
  const auto acts = forward_activations(net, pts);
  REQUIRE(acts.size() == 3);
  CHECK(acts[0].rows() == 4);
  CHECK(acts[0].cols() == 5);
  CHECK(acts[1].cols() == 7);
  CHECK(acts[2].cols() == 1);
  // hidden activations are post-tanh, hence inside (-1, 1)
  CHECK(acts[0].cwiseAbs().maxCoeff() < 1.0);
  CHECK(acts[1].cwiseAbs().maxCoeff() < 1.0);
  // the last entry is the linear output
  const VectorXd direct = forward_values(net, pts);
  CHECK((acts[2].col(0) - direct).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batch derivatives agree with the single-point path") {
  MLP net = random_net({2, 6, 6, 1}, 9);
  Eigen::MatrixX2d pts(3, 2);
  pts << 0.3, -0.4, -1.0, 1.0, 0.0, 0.0;
  const BatchDerivatives batch = forward_with_input_derivatives_batch(net, pts);
  for (int i = 0; i < 3; ++i) {
    const DerivativeBundle single =
        forward_with_input_derivatives(net, pts.row(i).transpose());
    CHECK(batch.value[i] == doctest::Approx(single.value).epsilon(1e-14));
    CHECK(batch.grad_x[i] == doctest::Approx(single.input_gradient.x()).epsilon(1e-14));
    CHECK(batch.grad_y[i] == doctest::Approx(single.input_gradient.y()).epsilon(1e-14));
    CHECK(batch.second_x[i] == doctest::Approx(single.input_pure_second.x()).epsilon(1e-14));
    CHECK(batch.second_y[i] == doctest::Approx(single.input_pure_second.y()).epsilon(1e-14));
    CHECK(batch.laplacian()[i] == doctest::Approx(single.laplacian()).epsilon(1e-14));
  }
}

TEST_CASE("derivatives of a linear-regime network match the closed form") {
  // with tiny weights, tanh ~ identity and second derivatives vanish
  MLP net = random_net({2, 4, 1}, 2);
  for (auto& w : net.weights) w *= 1e-6;
  const DerivativeBundle d = forward_with_input_derivatives(net, Vector2d(0.2, -0.7));
  const Eigen::RowVector2d lin = net.weights[1] * net.weights[0];
  CHECK(d.input_gradient.x() == doctest::Approx(lin[0]).epsilon(1e-6));
  CHECK(d.input_gradient.y() == doctest::Approx(lin[1]).epsilon(1e-6));
  CHECK(std::abs(d.laplacian()) < 1e-18);
}

TEST_CASE("checkpoint round-trips exactly, including metadata") {
  MLP net = random_net({2, 5, 3, 1}, 17);
  CheckpointMeta meta;
  meta.seed = 0xDEADBEEFCAFEull;
  meta.extra = {{"width", "5"}, {"x_deci", "4"}};

  const fs::path dir =
      fs::temp_directory_path() / ("layergen-net-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path p = dir / "checkpoint.txt";
  checkpoint_write(net, meta, p);

  const Checkpoint back = checkpoint_read(p);
  CHECK(back.net.equals(net)); // bitwise: %.17g round-trip
  CHECK(back.meta.seed == meta.seed);
  CHECK(back.meta.extra == meta.extra);

  // corruption paths
  atomic_write(p, "LAYERGEN-CHECKPOINT\nversion=99\n");
  CHECK_THROWS_AS(checkpoint_read(p), VersionError);
  atomic_write(p, "not a checkpoint\n");
  CHECK_THROWS_AS(checkpoint_read(p), ParseError);
  CHECK_THROWS_AS(checkpoint_read(dir / "absent.txt"), MissingInputError);
  fs::remove_all(dir);
}

TEST_SUITE_END();
