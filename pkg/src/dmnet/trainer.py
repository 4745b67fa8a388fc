"""Cost, backpropagation and mini-batch SGD with a bold-driver learning rate.

The backward sweep mirrors the forward sweep of :mod:`dmnet.network` layer by
layer and is vectorized over samples and over all nodes of a layer.
Matrix-valued gradients are kept as full symmetric 3x3 arrays whose
contraction with a perturbation gives the first-order cost change.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import compression
from .building_block import homogenize_small_vjp
from .errors import DeadNetwork
from .io import atomic_write_text
from .network import MaterialNetwork, count_active, forward_layers, propagate_weights
from .tensor_core import frobenius_norm, rotation_matrix, rotation_matrix_derivative

log = logging.getLogger(__name__)


@dataclass
class Gradient:
    z: np.ndarray
    theta: list

    def flat(self) -> np.ndarray:
        return np.concatenate([self.z] + list(self.theta))


@dataclass
class TrainerConfig:
    batch_size: int = 20
    epochs: int = 10000
    lam: float | None = None  # None: auto-scale on a pilot batch
    lam_fraction: float = 0.01
    xi: float | None = None  # None: 2**(N-2)
    eta0: float = 0.05
    growth: float = 1.05
    decay: float = 0.5
    compression_period: int = 10
    compress: bool = True
    tol_f: float = 0.05
    tol_theta: float = 0.05
    seed: int = 0
    target_error: float | None = None
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be non-negative")


def default_xi(depth: int) -> float:
    return 2.0 ** (depth - 2)


def _arrays(data):
    if isinstance(data, (tuple, list)):
        Dp1, Dp2, Ddns = data
    else:
        Dp1, Dp2, Ddns = data.Dp1, data.Dp2, data.Ddns
    Dp1, Dp2, Ddns = (np.asarray(a, dtype=float) for a in (Dp1, Dp2, Ddns))
    if Ddns.ndim == 2:
        Dp1, Dp2, Ddns = Dp1[None], Dp2[None], Ddns[None]
    return Dp1, Dp2, Ddns


def regularizer(net: MaterialNetwork, xi: float | None = None) -> float:
    """``(sum ReLU(z) - xi)**2``."""
    xi = default_xi(net.depth) if xi is None else xi
    return float((np.sum(np.maximum(net.z, 0.0)) - xi) ** 2)


def sample_errors(net: MaterialNetwork, data) -> np.ndarray:
    """Relative Frobenius error of each sample."""
    Dp1, Dp2, Ddns = _arrays(data)
    layers, _ = forward_layers(net, Dp1, Dp2)
    h = layers[0]["D"][:, 0]
    return frobenius_norm(Ddns - h) / frobenius_norm(Ddns)


def mean_error(net: MaterialNetwork, data) -> float:
    return float(np.mean(sample_errors(net, data)))


def cost(net: MaterialNetwork, data, lam: float = 0.0, xi: float | None = None) -> float:
    """``(1/2M) sum |Ddns - h|^2 / |Ddns|^2 + lam * (sum w - xi)^2``."""
    e = sample_errors(net, data)
    return float(0.5 * np.mean(e * e) + lam * regularizer(net, xi))


def _rotation_grad(G, Dr, theta):
    """``G : d(R(-t) Dr R(t))/dt`` per node, and ``dC/dDr``."""
    Rp, Rm = rotation_matrix(theta), rotation_matrix(-theta)
    dRp, dRm = rotation_matrix_derivative(theta), rotation_matrix_derivative(-theta)
    dD = -dRm @ Dr @ Rp + Rm @ Dr @ dRp
    g_theta = np.einsum("...ij,...ij->...", G, dD)
    alpha = Rp @ G @ Rm
    return g_theta, alpha


def _backward(net, layers, w, f, G0):
    """Propagate ``G0 = dC/dD_root`` (shape ``(S, 1, 3, 3)``) to all parameters."""
    N = net.depth
    g_theta = [None] * (N + 1)
    g_f = [None] * N
    G = G0
    for i in range(N):
        Dr = layers[i]["Dr"]
        gt, alpha = _rotation_grad(G, Dr, net.theta[i])
        g_theta[i] = gt.sum(axis=0)
        Dchild = layers[i + 1]["D"]
        G1, G2, gf = homogenize_small_vjp(Dchild[:, 0::2], Dchild[:, 1::2], f[i], Dr, alpha)
        g_f[i] = gf.sum(axis=0)
        G = np.empty(Dchild.shape)
        G[:, 0::2], G[:, 1::2] = G1, G2
    gt, _ = _rotation_grad(G, layers[N]["Din"], net.theta[N])
    g_theta[N] = gt.sum(axis=0)

    # chain df/dw down to the leaves
    acc = np.zeros(1)
    for i in range(N):
        wp = w[i]
        inv = np.divide(1.0, wp, out=np.zeros_like(wp), where=wp > 0.0)
        nxt = np.empty(2 ** (i + 1))
        nxt[0::2] = acc + g_f[i] * (1.0 - f[i]) * inv
        nxt[1::2] = acc - g_f[i] * f[i] * inv
        acc = nxt
    g_z = acc * (net.z > 0.0)
    return g_z, g_theta


def cost_and_gradient(net: MaterialNetwork, data, lam: float = 0.0, xi: float | None = None):
    """Mini-batch cost and its exact gradient.

    Returns ``(C, Gradient, errors)`` where ``errors`` are the per-sample
    relative errors at the current parameters.
    """
    Dp1, Dp2, Ddns = _arrays(data)
    M = Ddns.shape[0]
    xi = default_xi(net.depth) if xi is None else xi
    layers, (w, f) = forward_layers(net, Dp1, Dp2)
    h = layers[0]["D"][:, 0]
    diff = Ddns - h
    n2 = np.sum(Ddns * Ddns, axis=(-2, -1))
    e2 = np.sum(diff * diff, axis=(-2, -1)) / n2
    excess = np.sum(w[-1]) - xi
    C = 0.5 * np.mean(e2) + lam * excess * excess
    G0 = (-diff / (M * n2[:, None, None]))[:, None]
    g_z, g_theta = _backward(net, layers, w, f, G0)
    g_z = g_z + 2.0 * lam * excess * (net.z > 0.0)
    return float(C), Gradient(g_z, g_theta), np.sqrt(e2)


def backprop(net: MaterialNetwork, sample) -> Gradient:
    """Gradient of the single-sample cost ``|Ddns - h|^2 / |Ddns|^2``."""
    _, g, _ = cost_and_gradient(net, sample, 0.0)
    return Gradient(2.0 * g.z, [2.0 * t for t in g.theta])


def frozen_angle_mask(net: MaterialNetwork, weights=None) -> list:
    """True where an angle must not move: dead nodes and pass-through blocks."""
    w, f = propagate_weights(net) if weights is None else weights
    masks = []
    for i in range(net.depth + 1):
        dead = w[i] <= 0.0
        if i < net.depth:
            dead = dead | (f[i] == 0.0) | (f[i] == 1.0)
        masks.append(dead)
    return masks


def apply_update(net: MaterialNetwork, grad: Gradient, eta: float) -> None:
    frozen = frozen_angle_mask(net)
    net.z = net.z - eta * grad.z
    net.theta = [t - eta * np.where(m, 0.0, g) for t, g, m in zip(net.theta, grad.theta, frozen)]


def bold_driver_update(eta: float, cost_now: float, cost_prev: float | None, growth: float = 1.05, decay: float = 0.5) -> float:
    if cost_prev is None or cost_now == cost_prev:
        return eta
    return eta * growth if cost_now < cost_prev else eta * decay


def auto_lambda(net: MaterialNetwork, data, fraction: float = 0.01, xi: float | None = None) -> float:
    """Regularizer weight giving ``fraction`` of the data cost on ``data``."""
    reg = regularizer(net, xi)
    if reg <= 0.0:
        return 0.0
    return fraction * cost(net, data, 0.0) / reg


@dataclass
class TrainingHistory:
    epoch: list = field(default_factory=list)
    train_err: list = field(default_factory=list)
    valid_err: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    n_active: list = field(default_factory=list)
    cost: list = field(default_factory=list)

    def append(self, **row):
        for k, v in row.items():
            getattr(self, k).append(v)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["epoch", "train_err", "valid_err", "eta", "N_a"])
        for row in zip(self.epoch, self.train_err, self.valid_err, self.eta, self.n_active):
            wr.writerow([repr(x) if isinstance(x, float) else x for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    def save(self, stem) -> None:
        atomic_write_text(f"{stem}.csv", self.to_csv())
        atomic_write_text(f"{stem}.json", self.to_json())


def sgd_epoch(net: MaterialNetwork, data, config: TrainerConfig, eta: float, lam: float, rng) -> float:
    """One shuffled pass over ``data``; returns the mean mini-batch cost."""
    Dp1, Dp2, Ddns = _arrays(data)
    S = Ddns.shape[0]
    perm = rng.permutation(S)
    costs = []
    for start in range(0, S, config.batch_size):
        idx = perm[start : start + config.batch_size]
        C, g, _ = cost_and_gradient(net, (Dp1[idx], Dp2[idx], Ddns[idx]), lam, config.xi)
        apply_update(net, g, eta)
        costs.append(C)
    return float(np.mean(costs))


def train(net: MaterialNetwork, train_set, valid_set=None, config: TrainerConfig | None = None, start_epoch: int = 0):
    """Train ``net`` in place and return ``(best_net, history)``.

    The returned network is the snapshot with the lowest validation error
    (training error if no validation set is given).
    """
    config = config or TrainerConfig()
    rng = np.random.default_rng(config.seed)
    data = _arrays(train_set)
    vdata = _arrays(valid_set) if valid_set is not None else None
    lam = config.lam
    if lam is None:
        pilot = tuple(a[: config.batch_size] for a in data)
        lam = auto_lambda(net, pilot, config.lam_fraction, config.xi)
    eta = config.eta0
    hist = TrainingHistory()
    best, best_err, best_epoch = net.copy(), math.inf, start_epoch
    prev = None
    for epoch in range(start_epoch + 1, start_epoch + config.epochs + 1):
        try:
            sgd_epoch(net, data, config, eta, lam, rng)
            if config.compress and config.compression_period and epoch % config.compression_period == 0:
                compression.compress(net, config.tol_f, config.tol_theta)
            e = sample_errors(net, data)
            tr = float(np.mean(e))
            # full-batch cost at the end of the epoch drives the learning rate
            c = float(0.5 * np.mean(e * e) + lam * regularizer(net, config.xi))
            va = mean_error(net, vdata) if vdata is not None else tr
        except DeadNetwork as exc:
            raise DeadNetwork(f"epoch {epoch}: {exc}") from exc
        hist.append(epoch=epoch, train_err=tr, valid_err=va, eta=eta, n_active=count_active(net), cost=c)
        if va < best_err:
            best, best_err, best_epoch = net.copy(), va, epoch
        eta = bold_driver_update(eta, c, prev, config.growth, config.decay)
        prev = c
        if config.target_error is not None and tr < config.target_error:
            break
        if config.early_stop_patience and epoch - best_epoch > config.early_stop_patience:
            break
    best.history = {
        "epochs": hist.epoch[-1] if hist.epoch else start_epoch,
        "final_training_error": mean_error(best, data),
        "final_validation_error": mean_error(best, vdata) if vdata is not None else None,
        "lam": lam,
    }
    return best, hist
