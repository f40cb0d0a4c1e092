// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the layergen core: enough surface to train a network,
// probe its derivatives, and run SVCCA comparisons from a notebook.  The
// orchestration layer (run directories, manifests) stays CLI-only.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "layergen/bvp.hpp"
#include "layergen/generality.hpp"
#include "layergen/loss.hpp"
#include "layergen/net.hpp"
#include "layergen/rng.hpp"
#include "layergen/svcca.hpp"
#include "layergen/trainer.hpp"
#include "layergen/transfer.hpp"

namespace py = pybind11;
using namespace layergen;

namespace {

MLP init_net(const std::vector<int>& widths, std::uint64_t seed) {
  Rng rng = substream(seed, 0);
  return glorot_init(widths, rng);
}

TaggedPointSet sample_points(const BVPSpec& spec, long n_interior, long n_per_edge,
                             std::uint64_t seed) {
  Rng rng = substream(seed, 1);
  return sample_training_set(rng, spec, n_interior, n_per_edge);
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "layer generality experiments on a Poisson problem family";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Rect>(m, "Rect")
      .def(py::init<>())
      .def_readwrite("x0", &Rect::x0)
      .def_readwrite("x1", &Rect::x1)
      .def_readwrite("y0", &Rect::y0)
      .def_readwrite("y1", &Rect::y1);

  py::class_<BVPSpec>(m, "BVPSpec")
      .def(py::init<>())
      .def_readwrite("x_source", &BVPSpec::x_source)
      .def_readwrite("y_source", &BVPSpec::y_source)
      .def_readwrite("r", &BVPSpec::r)
      .def_readwrite("eta", &BVPSpec::eta)
      .def_readwrite("domain", &BVPSpec::domain)
      .def("validate", &BVPSpec::validate);

  m.def("source_term",
        py::overload_cast<const Eigen::Ref<const Eigen::MatrixX2d>&, const BVPSpec&>(
            &source_term),
        py::arg("points"), py::arg("spec"), "source field evaluated at an n x 2 point array");

  py::enum_<LossNorm>(m, "LossNorm")
      .value("L1", LossNorm::L1)
      .value("L2", LossNorm::L2);

  py::class_<TaggedPointSet>(m, "TaggedPointSet")
      .def_readonly("points", &TaggedPointSet::points)
      .def("size", &TaggedPointSet::size);

  m.def("sample_points", &sample_points, py::arg("spec"), py::arg("n_interior"),
        py::arg("n_per_edge"), py::arg("seed"),
        "draw a tagged interior/boundary training set");

  py::class_<MLP>(m, "MLP")
      .def_readonly("weights", &MLP::weights)
      .def_readonly("biases", &MLP::biases)
      .def("widths", &MLP::widths)
      .def("depth", &MLP::depth)
      .def("forward", [](const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& pts) {
        return forward_values(net, pts);
      }, py::arg("points"), "network output at an n x 2 point array");

  m.def("init_net", &init_net, py::arg("widths"), py::arg("seed"),
        "Glorot-initialised network for the given layer widths (first 2, last 1)");

  py::class_<BatchDerivatives>(m, "BatchDerivatives")
      .def_readonly("value", &BatchDerivatives::value)
      .def_readonly("grad_x", &BatchDerivatives::grad_x)
      .def_readonly("grad_y", &BatchDerivatives::grad_y)
      .def_readonly("second_x", &BatchDerivatives::second_x)
      .def_readonly("second_y", &BatchDerivatives::second_y)
      .def("laplacian", &BatchDerivatives::laplacian);

  m.def("derivatives",
        [](const MLP& net, const Eigen::Ref<const Eigen::MatrixX2d>& pts) {
          return forward_with_input_derivatives_batch(net, pts);
        },
        py::arg("net"), py::arg("points"),
        "value, gradient and pure second derivatives of the network output");

  m.def("loss",
        [](const MLP& net, const TaggedPointSet& pts, const BVPSpec& spec, LossNorm norm) {
          return loss_value(net, pts, spec, norm);
        },
        py::arg("net"), py::arg("points"), py::arg("spec"), py::arg("norm") = LossNorm::L2);

  py::class_<AdamParams>(m, "AdamParams")
      .def(py::init<>())
      .def_readwrite("alpha", &AdamParams::alpha)
      .def_readwrite("beta1", &AdamParams::beta1)
      .def_readwrite("beta2", &AdamParams::beta2)
      .def_readwrite("eps", &AdamParams::eps);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("resample_every", &TrainConfig::resample_every)
      .def_readwrite("eval_every", &TrainConfig::eval_every)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("adam", &TrainConfig::adam)
      .def_readwrite("n_interior", &TrainConfig::n_interior)
      .def_readwrite("n_per_edge", &TrainConfig::n_per_edge)
      .def_readwrite("test_scale", &TrainConfig::test_scale)
      .def_readwrite("norm", &TrainConfig::norm)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<TrainRecord>(m, "TrainRecord")
      .def_readonly("test_losses", &TrainRecord::test_losses)
      .def_readonly("best_eval", &TrainRecord::best_eval)
      .def_readonly("final_test_loss", &TrainRecord::final_test_loss)
      .def_readonly("epochs", &TrainRecord::epochs)
      .def_readonly("wall_seconds", &TrainRecord::wall_seconds)
      .def_readonly("aborted_non_finite", &TrainRecord::aborted_non_finite);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("net", &TrainResult::net)
      .def_readonly("record", &TrainResult::record);

  m.def("train",
        [](const BVPSpec& spec, const std::vector<int>& hidden, const TrainConfig& cfg) {
          py::gil_scoped_release release;
          return train(spec, hidden, cfg);
        },
        py::arg("spec"), py::arg("hidden_widths"), py::arg("config"),
        "train a network on the given problem; returns the best-eval checkpoint");

  m.def("derive_seed", &derive_seed, py::arg("x_index"), py::arg("r_index"),
        py::arg("n_layers"), py::arg("width"), py::arg("seed_core"));

  py::class_<SampleGrid>(m, "SampleGrid")
      .def(py::init<>())
      .def_readwrite("nx", &SampleGrid::nx)
      .def_readwrite("ny", &SampleGrid::ny)
      .def_readwrite("domain", &SampleGrid::domain)
      .def("points", &SampleGrid::points);

  py::class_<ActivationMatrix>(m, "ActivationMatrix")
      .def_readonly("values", &ActivationMatrix::values)
      .def_readonly("layer_index", &ActivationMatrix::layer_index)
      .def_readonly("width", &ActivationMatrix::width);

  m.def("sample_activations", &sample_activations, py::arg("net"), py::arg("layer"),
        py::arg("grid"), "hidden-layer activations on a sample grid (layer is 1-based)");

  py::class_<CCAResult>(m, "CCAResult")
      .def_readonly("correlations", &CCAResult::correlations)
      .def_readonly("projection_a", &CCAResult::projection_a)
      .def_readonly("projection_b", &CCAResult::projection_b);

  m.def("cca", &cca, py::arg("a"), py::arg("b"), "canonical correlations of two views");
  m.def("svcca_similarity",
        [](const ActivationMatrix& a, const ActivationMatrix& b, py::object threshold) {
          std::optional<double> t;
          if (!threshold.is_none()) t = threshold.cast<double>();
          return svcca_similarity(a, b, t);
        },
        py::arg("a"), py::arg("b"), py::arg("threshold") = py::none(),
        "rho = sum of canonical correlations, optionally after SVD reduction");
  m.def("self_similarity", &self_similarity, py::arg("a"),
        "rho_self: normalised singular-value sum; the layer's intrinsic dimensionality");

  m.def("fd_solve",
        [](const BVPSpec& spec, int n) { return fd_solve(spec, n).values; },
        py::arg("spec"), py::arg("n"),
        "dense finite-difference reference solution on an n x n grid (row-major, y-major)");
}
