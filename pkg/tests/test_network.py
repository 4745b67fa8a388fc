import json

import numpy as np
import pytest

from dmnet import network as nw
from dmnet.building_block import homogenize_small
from dmnet.errors import DeadNetwork, FormatError
from dmnet.tensor_core import isotropic_compliance, rotate_compliance

from conftest import random_compliance


def make(z, theta=None, depth=None):
    z = np.asarray(z, dtype=float)
    depth = depth or int(np.log2(z.size))
    theta = theta or [np.zeros(2**i) for i in range(depth + 1)]
    return nw.MaterialNetwork(depth, z, theta, nw.default_phases(depth))


@pytest.mark.parametrize("N", [1, 3, 5, 7])
def test_init_random(N):
    net = nw.init_random(N, seed=11)
    assert net.n_leaves == 2**N
    assert sum(t.size for t in net.theta) == 2 ** (N + 1) - 1
    assert net.n_parameters == 3 * 2**N - 1
    assert np.all((net.z > 0.2) & (net.z < 0.8))
    assert np.all(np.abs(np.concatenate(net.theta)) <= np.pi / 2)
    assert nw.count_active(net) == 2**N
    again = nw.init_random(N, seed=11)
    assert np.array_equal(again.z, net.z) and all(np.array_equal(a, b) for a, b in zip(again.theta, net.theta))


def test_init_rejects_bad_depth():
    with pytest.raises(ValueError):
        nw.init_random(0)


def test_propagate_weights_example():
    w, f = nw.propagate_weights(make([1, 2, 1, 0]))
    assert w[2].tolist() == [1, 2, 1, 0]
    assert w[1].tolist() == [3, 1]
    assert w[0].tolist() == [4]
    assert f[0][0] == 0.75
    with pytest.raises(DeadNetwork):
        nw.propagate_weights(make([-1, -2, -0.5, 0]))


def test_weight_conservation(rng):
    for _ in range(20):
        net = nw.init_random(6, rng=rng)
        net.z = rng.uniform(-0.5, 1.0, net.z.size)
        net.z[0] = 1.0
        w, _ = nw.propagate_weights(net)
        assert np.isclose(w[0][0], np.maximum(net.z, 0).sum(), rtol=1e-12)
        for i in range(net.depth):
            span = 2 ** (net.depth - i)
            sums = w[-1].reshape(-1, span).sum(axis=1)
            assert np.allclose(w[i], sums, rtol=1e-12)


def test_forward_identical_isotropic(rng):
    D = isotropic_compliance(3.0, 0.25)
    net = nw.init_random(5, rng=rng)
    assert np.allclose(nw.forward_elastic(net, D, D), D, rtol=1e-12)


def test_single_active_leaf():
    D1, D2 = random_compliance(np.random.default_rng(0)), random_compliance(np.random.default_rng(1))
    z = -np.ones(8)
    z[2] = 0.5  # a phase-1 leaf
    net = make(z)
    assert np.allclose(nw.forward_elastic(net, D1, D2), D1, rtol=1e-14)
    assert nw.count_active(net) == 1
    assert nw.phase_volume_fraction(net) == 1.0
    rects = nw.to_treemap(net)
    assert len(rects) == 1 and np.isclose(rects[0]["area"], 1.0)
    assert rects[0]["width"] == 1.0 and rects[0]["height"] == 1.0


def test_single_block():
    D1, D2 = isotropic_compliance(1.0, 0.3), isotropic_compliance(10.0, 0.2)
    net = make([1.0, 1.0])
    assert np.allclose(nw.forward_elastic(net, D1, D2), homogenize_small(D1, D2, 0.5), rtol=1e-14)


def test_count_active_examples():
    assert nw.count_active(nw.init_random(5, seed=0)) == 32
    assert nw.count_active(make([-1, -1, -1, -1])) == 0
    assert nw.count_active(make([1, -1, 2, 0])) == 2


def test_volume_fraction_equal_weights():
    assert nw.phase_volume_fraction(make(np.ones(16))) == 0.5


def test_zero_weight_subtree_has_no_influence(rng):
    D1, D2 = random_compliance(rng), random_compliance(rng)
    net = nw.init_random(4, rng=rng)
    net.z[4:8] = -1.0
    out = nw.forward_elastic(net, D1, D2)
    other = net.copy()
    for j in range(2, 5):  # subtree of node (2, 1)
        span = 2 ** (j - 2)
        other.theta[j][span : 2 * span] = rng.uniform(-3, 3, span)
    other.z[4:8] = -rng.uniform(0, 5, 4)
    assert np.array_equal(nw.forward_elastic(other, D1, D2), out)


def test_cost_invariant_under_corotation(rng):
    from dmnet.trainer import sample_errors

    net = nw.init_random(4, rng=rng)
    D1, D2 = random_compliance(rng), random_compliance(rng)
    target = random_compliance(rng)
    phi = 0.7
    e0 = sample_errors(net, (D1, D2, target))
    rot = net.copy()
    rot.theta[-1] = rot.theta[-1] - phi
    rot.theta[0] = rot.theta[0] + phi
    e1 = sample_errors(rot, (rotate_compliance(D1, phi), rotate_compliance(D2, phi), rotate_compliance(target, phi)))
    assert np.allclose(e0, e1, rtol=1e-12)


def test_frame_equivariance(rng):
    net = nw.init_random(3, rng=rng)
    D1, D2 = random_compliance(rng), random_compliance(rng)
    phi = -0.4
    shifted = net.copy()
    shifted.theta[-1] = shifted.theta[-1] - phi
    shifted.theta[0] = shifted.theta[0] + phi
    a = nw.forward_elastic(shifted, rotate_compliance(D1, phi), rotate_compliance(D2, phi))
    b = rotate_compliance(nw.forward_elastic(net, D1, D2), phi)
    assert np.allclose(a, b, rtol=1e-12)


def test_treemap(rng):
    rects = nw.to_treemap(make([1.0, 1.0]))
    assert len(rects) == 2 and all(np.isclose(r["area"], 0.5) for r in rects)
    for _ in range(10):
        net = nw.init_random(5, rng=rng)
        net.z[rng.integers(0, 32, 5)] = -1
        rects = nw.to_treemap(net)
        assert np.isclose(sum(r["area"] for r in rects), 1.0)
        assert np.isclose(sum(r["width"] * r["height"] for r in rects), 1.0)
        assert len(rects) == nw.count_active(net)
    svg = nw.treemap_svg(rects)
    assert svg.startswith("<svg") and svg.count("<rect") == len(rects)


def test_checkpoint_roundtrip(tmp_path, rng):
    net = nw.init_random(4, seed=3)
    net.history = {"epochs": 10, "final_training_error": 0.1, "final_validation_error": 0.2}
    data = nw.save(net)
    again = nw.load(data)
    assert nw.save(again) == data
    assert np.array_equal(again.z, net.z)
    assert all(np.array_equal(a, b) for a, b in zip(again.theta, net.theta))
    p = tmp_path / "net.json"
    nw.save_file(net, p)
    assert nw.load_file(p).history == net.history


def test_checkpoint_errors():
    data = nw.save(nw.init_random(3, seed=1))
    with pytest.raises(FormatError):
        nw.load(data[: len(data) // 2])
    d = json.loads(data)
    d["version"] = 99
    with pytest.raises(FormatError, match="version"):
        nw.load(json.dumps(d))
    d = json.loads(data)
    del d["z"]
    with pytest.raises(FormatError):
        nw.load(json.dumps(d))


def test_reported_angles_reduced():
    net = nw.init_random(2, seed=0)
    net.theta[0][0] = 3 * np.pi + 0.2
    red = net.reported_angles()
    assert np.isclose(red[0][0], 0.2)
    assert all(np.all((r >= -np.pi / 2) & (r < np.pi / 2)) for r in red)
