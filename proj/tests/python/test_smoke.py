# SPDX-License-Identifier: Apache-2.0
"""End-to-end smoke tests for the Python bindings.

These stay deliberately light: the heavy numerical verification lives in the
C++ test suites. Here we check that the binding surface is importable, that
shapes and dtypes round-trip through numpy, and that a few independently
computable values come out right.
"""

import math

import numpy as np
import pytest

import layergen as lg


def default_spec(x_source=0.0):
    spec = lg.BVPSpec()
    spec.x_source = x_source
    spec.validate()
    return spec


def tiny_net(seed=1):
    return lg.init_net([2, 5, 4, 1], seed)


def test_version_and_surface():
    assert lg.__version__
    for name in ("BVPSpec", "init_net", "train", "cca", "fd_solve", "derive_seed"):
        assert hasattr(lg, name)


def test_source_term_peak_and_decay():
    spec = default_spec()
    pts = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
    s = np.asarray(lg.source_term(pts, spec))
    # peak value is -1 / (2 pi r^2)
    assert s[0] == pytest.approx(-1.0 / (2.0 * math.pi * 0.1**2), rel=1e-12)
    assert abs(s[1]) < abs(s[0])
    assert abs(s[2]) < abs(s[1])
    assert np.all(s < 0.0)


def test_spec_validation_maps_to_value_error():
    spec = lg.BVPSpec()
    spec.r = 0.0
    with pytest.raises(ValueError):
        spec.validate()


def test_init_net_is_deterministic():
    a, b, c = tiny_net(7), tiny_net(7), tiny_net(8)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(np.asarray(wa), np.asarray(wb))
    assert not np.array_equal(np.asarray(a.weights[0]), np.asarray(c.weights[0]))
    assert a.widths() == [2, 5, 4, 1]
    assert a.depth() == 2
    for bias in a.biases:
        assert not np.any(np.asarray(bias))  # biases start at zero


def test_forward_shape_and_range():
    net = tiny_net()
    pts = np.random.default_rng(0).uniform(-1.0, 1.0, size=(40, 2))
    out = np.asarray(net.forward(pts))
    assert out.shape == (40,)
    assert np.all(np.isfinite(out))


def test_derivatives_match_finite_differences():
    net = tiny_net(3)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.9, 0.9, size=(10, 2))
    d = lg.derivatives(net, pts)

    h = 1e-6
    for k, (x, y) in enumerate(pts):
        def f(px, py):
            return float(np.asarray(net.forward(np.array([[px, py]])))[0])

        fd_gx = (f(x + h, y) - f(x - h, y)) / (2 * h)
        fd_gy = (f(x, y + h) - f(x, y - h)) / (2 * h)
        assert d.grad_x[k] == pytest.approx(fd_gx, rel=1e-5, abs=1e-8)
        assert d.grad_y[k] == pytest.approx(fd_gy, rel=1e-5, abs=1e-8)

        # second differences need a larger step: at h=1e-6 the subtractive
        # roundoff (~4 eps |f| / h^2) alone would exceed the tolerance
        h2 = 1e-4
        fd_xx = (f(x + h2, y) - 2 * f(x, y) + f(x - h2, y)) / h2**2
        fd_yy = (f(x, y + h2) - 2 * f(x, y) + f(x, y - h2)) / h2**2
        assert d.second_x[k] == pytest.approx(fd_xx, rel=1e-3, abs=1e-4)
        assert d.second_y[k] == pytest.approx(fd_yy, rel=1e-3, abs=1e-4)

    lap = np.asarray(d.laplacian())
    assert lap == pytest.approx(np.asarray(d.second_x) + np.asarray(d.second_y))


def test_sampling_counts_and_domain():
    spec = default_spec()
    pts = lg.sample_points(spec, 100, 25, seed=5)
    assert pts.size() == 100 + 4 * 25
    arr = np.asarray(pts.points)
    assert arr.shape == (200, 2)
    assert np.all(arr >= -1.0) and np.all(arr <= 1.0)


def test_loss_decreases_under_training():
    spec = default_spec()
    cfg = lg.TrainConfig()
    cfg.n_interior = 48
    cfg.n_per_edge = 12
    cfg.test_scale = 2
    cfg.resample_every = 20
    cfg.eval_every = 20
    cfg.patience = 3
    cfg.max_epochs = 300
    cfg.adam.alpha = 1e-2
    cfg.seed = 11

    result = lg.train(spec, [6, 6], cfg)
    rec = result.record
    assert rec.epochs > 0
    assert not rec.aborted_non_finite
    assert math.isfinite(rec.final_test_loss)
    assert rec.final_test_loss == pytest.approx(min(rec.test_losses))
    assert rec.final_test_loss <= rec.test_losses[0]
    assert rec.final_test_loss < 1.5  # clearly below the untrained level (~2)
    assert result.net.widths() == [2, 6, 6, 1]


def test_train_is_deterministic():
    spec = default_spec(0.3)
    cfg = lg.TrainConfig()
    cfg.n_interior = 32
    cfg.n_per_edge = 8
    cfg.test_scale = 2
    cfg.resample_every = 10
    cfg.eval_every = 10
    cfg.patience = 2
    cfg.max_epochs = 60
    cfg.adam.alpha = 1e-2
    cfg.seed = 4

    r1 = lg.train(spec, [4], cfg)
    r2 = lg.train(spec, [4], cfg)
    assert r1.record.final_test_loss == r2.record.final_test_loss
    for w1, w2 in zip(r1.net.weights, r2.net.weights):
        assert np.array_equal(np.asarray(w1), np.asarray(w2))


def test_derive_seed_distinctness():
    seeds = {
        lg.derive_seed(x, r, 4, 16, 0)
        for x in range(4)
        for r in range(3)
    }
    assert len(seeds) == 12


def test_cca_and_similarity():
    grid = lg.SampleGrid()
    grid.nx = 12
    grid.ny = 12

    net_a = tiny_net(1)
    net_b = tiny_net(2)
    acts_a = lg.sample_activations(net_a, 1, grid)
    acts_b = lg.sample_activations(net_b, 1, grid)
    assert np.asarray(acts_a.values).shape == (144, 5)

    # a layer is perfectly similar to itself
    same = lg.cca(acts_a, lg.sample_activations(net_a, 1, grid))
    assert np.asarray(same.correlations) == pytest.approx(np.ones(5), abs=1e-8)

    rho = lg.svcca_similarity(acts_a, acts_b)
    assert 0.0 <= rho <= 5.0
    assert rho == pytest.approx(lg.svcca_similarity(acts_b, acts_a), abs=1e-8)
    # an explicit full-variance threshold matches the unreduced similarity
    assert lg.svcca_similarity(acts_a, acts_b, 1.0) == pytest.approx(rho, abs=1e-10)

    dim = lg.self_similarity(acts_a)
    assert 1.0 <= dim <= 5.0

    with pytest.raises(ValueError):
        lg.sample_activations(net_a, 0, grid)  # layers are 1-based
    with pytest.raises(ValueError):
        lg.svcca_similarity(acts_a, acts_b, 1.5)  # threshold outside (0, 1]


def test_fd_solve_shape_and_boundary():
    spec = default_spec()
    n = 33
    values = np.asarray(lg.fd_solve(spec, n)).reshape(n, n)
    # Dirichlet zero boundary; a negative source makes u superharmonic, so the
    # interior field is positive
    assert values[0, :] == pytest.approx(np.zeros(n))
    assert values[:, -1] == pytest.approx(np.zeros(n))
    assert values.max() > 0.0
    assert values.min() >= -1e-12
    with pytest.raises(ValueError):
        lg.fd_solve(spec, 2)
