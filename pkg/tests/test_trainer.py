import numpy as np
import pytest

from dmnet import network as nw
from dmnet import trainer as tr
from dmnet.errors import DeadNetwork
from dmnet.oracle import LaminateOracle, UniformOracle
from dmnet.sampling import build_dataset, phase_inputs
from dmnet.tensor_core import isotropic_compliance

from conftest import random_compliance


def batch(rng, n=4):
    Dp1 = np.array([random_compliance(rng) for _ in range(n)])
    Dp2 = np.array([random_compliance(rng) for _ in range(n)])
    Ddns = np.array([random_compliance(rng) for _ in range(n)])
    return Dp1, Dp2, Ddns


def fd_gradient(net, data, lam, h=1e-6):
    g = []
    params = [("z", None, j) for j in range(net.z.size)]
    params += [("t", i, k) for i in range(net.depth + 1) for k in range(2**i)]
    for kind, i, k in params:
        vals = []
        for s in (h, -h):
            p = net.copy()
            if kind == "z":
                p.z[k] += s
            else:
                p.theta[i][k] += s
            vals.append(tr.cost(p, data, lam))
        g.append((vals[0] - vals[1]) / (2 * h))
    return np.array(g)


def test_cost_examples():
    D = isotropic_compliance(2.0, 0.3)
    net = nw.init_random(2, seed=0)
    net.z[:] = 0.25  # sum of weights = 1 = xi for N = 2
    assert tr.cost(net, (D, D, D), lam=5.0) < 1e-28
    # a net whose output is target / 2
    target = 2.0 * D
    assert np.isclose(tr.cost(net, (D, D, target), 0.0), 0.125)
    net.z[:] = 0.6
    c0 = tr.cost(net, (D, D, target), 0.0)
    c1 = tr.cost(net, (D, D, target), 0.3)
    assert np.isclose(c1 - 0.3 * tr.regularizer(net), c0, rtol=1e-14)
    assert np.isclose(tr.regularizer(net), (2.4 - 1.0) ** 2)


@pytest.mark.parametrize("lam", [0.0, 0.07])
def test_gradient_matches_finite_differences(rng, lam):
    for _ in range(5):
        net = nw.init_random(3, rng=rng)
        data = batch(rng)
        _, g, _ = tr.cost_and_gradient(net, data, lam)
        fd = fd_gradient(net, data, lam)
        an = g.flat()
        assert np.abs(an - fd).max() <= 1e-5 * np.abs(fd).max()


def test_backprop_single_sample(rng):
    net = nw.init_random(3, rng=rng)
    D1, D2, T = (a[0] for a in batch(rng, 1))
    g = tr.backprop(net, (D1, D2, T))
    # C_s = |Ddns - h|^2 / |Ddns|^2, i.e. twice the single-sample cost
    fd = 2.0 * fd_gradient(net, (D1[None], D2[None], T[None]), 0.0)
    assert np.allclose(g.flat(), fd, atol=1e-6 * np.abs(fd).max())


def test_batch_gradient_is_mean_of_sample_gradients(rng):
    net = nw.init_random(4, rng=rng)
    data = batch(rng, 6)
    _, g, _ = tr.cost_and_gradient(net, data, 0.0)
    per = [tr.backprop(net, tuple(a[s] for a in data)).flat() for s in range(6)]
    assert np.allclose(g.flat(), 0.5 * np.mean(per, axis=0), rtol=1e-10, atol=1e-14)


def test_inactive_leaf_gets_zero_gradient(rng):
    net = nw.init_random(3, rng=rng)
    net.z[[1, 4]] = -0.3
    _, g, _ = tr.cost_and_gradient(net, batch(rng), 0.2)
    assert g.z[1] == 0.0 and g.z[4] == 0.0


def test_identical_isotropic_phases_zero_angle_gradient(rng):
    net = nw.init_random(3, rng=rng)
    D = isotropic_compliance(1.0, 0.3)
    T = isotropic_compliance(1.5, 0.2)
    _, g, _ = tr.cost_and_gradient(net, (D[None], D[None], T[None]), 0.0)
    assert all(np.allclose(t, 0.0, atol=1e-14) for t in g.theta)


def test_perfect_fit_leaves_parameters(rng):
    D = isotropic_compliance(1.0, 0.3)
    net = nw.init_random(2, seed=3)
    net.z[:] = 0.25
    data = (np.array([D] * 20), np.array([D] * 20), np.array([D] * 20))
    before = net.copy()
    tr.sgd_epoch(net, data, tr.TrainerConfig(), 0.1, 1.0, np.random.default_rng(0))
    assert np.allclose(net.z, before.z) and all(np.allclose(a, b) for a, b in zip(net.theta, before.theta))


def test_ten_steps_per_epoch(monkeypatch):
    calls = []
    orig = tr.apply_update

    def spy(net, g, eta):
        calls.append(1)
        return orig(net, g, eta)

    monkeypatch.setattr(tr, "apply_update", spy)
    Dp1, Dp2 = phase_inputs(200, 1)
    net = nw.init_random(3, seed=1)
    tr.sgd_epoch(net, (Dp1, Dp2, Dp1), tr.TrainerConfig(), 0.01, 0.0, np.random.default_rng(0))
    assert len(calls) == 10


def test_sgd_on_quadratic_toy_converges_geometrically():
    x, eta = 5.0, 0.3
    errs = []
    for _ in range(20):
        x -= eta * 2.0 * x  # d/dx x^2
        errs.append(abs(x))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.allclose(ratios, 0.4)


def test_bold_driver():
    assert tr.bold_driver_update(1.0, 0.5, 1.0) == 1.05
    assert tr.bold_driver_update(1.0, 2.0, 1.0) == 0.5
    assert tr.bold_driver_update(1.0, 2.0, None) == 1.0
    eta = 1.0
    for k in range(10):
        eta = tr.bold_driver_update(eta, 1.0 if k % 2 else 2.0, 2.0 if k % 2 else 1.0)
    assert eta < 1.0


def test_deactivation_is_permanent(rng):
    Dp1, Dp2 = phase_inputs(40, 2)
    data = (Dp1, Dp2, np.array([LaminateOracle(0.3)(a, b) for a, b in zip(Dp1, Dp2)]))
    net = nw.init_random(4, seed=5)
    net.z[[0, 3, 9]] = [-0.1, 0.0, -2.0]
    cfg = tr.TrainerConfig(epochs=30, seed=1, compress=False)
    dead = net.z <= 0
    best, hist = tr.train(net, data, None, cfg)
    assert np.all(net.z[dead] <= 0)
    # with compression the leaf layout changes, but the active count never grows
    _, hist = tr.train(nw.init_random(4, seed=5), data, None, tr.TrainerConfig(epochs=30, seed=1))
    assert np.all(np.diff(hist.n_active) <= 0)
    assert hist.epoch == list(range(1, 31))


def test_config_validation():
    with pytest.raises(ValueError):
        tr.TrainerConfig(batch_size=0)
    with pytest.raises(ValueError):
        tr.TrainerConfig(eta0=0.0)
    with pytest.raises(ValueError):
        tr.TrainerConfig(lam=-1.0)


def test_dead_network_reported_with_epoch():
    D = isotropic_compliance(1.0, 0.3)
    net = nw.init_random(2, seed=0)
    net.z[:] = -1.0
    with pytest.raises(DeadNetwork):
        tr.train(net, (D[None], D[None], D[None]), None, tr.TrainerConfig(epochs=1))


def test_training_is_deterministic_and_improves():
    t, v = build_dataset(LaminateOracle(0.3), 60, 20, seed=4)
    cfg = tr.TrainerConfig(epochs=100, seed=2)
    b1, h1 = tr.train(nw.init_random(4, seed=9), t, v, cfg)
    b2, h2 = tr.train(nw.init_random(4, seed=9), t, v, cfg)
    assert h1.train_err == h2.train_err and np.array_equal(b1.z, b2.z)
    assert h1.train_err[-1] < 0.25 * h1.train_err[0]
    assert b1.history["final_validation_error"] == min(h1.valid_err)


def test_history_export(tmp_path):
    t, v = build_dataset(UniformOracle(), 20, 10, seed=0)
    _, h = tr.train(nw.init_random(2, seed=0), t, v, tr.TrainerConfig(epochs=3))
    csv = h.to_csv().splitlines()
    assert csv[0] == "epoch,train_err,valid_err,eta,N_a" and len(csv) == 4
    h.save(tmp_path / "hist")
    assert (tmp_path / "hist.csv").exists() and (tmp_path / "hist.json").exists()
